use phaselattice::evolve::Schedule;
use rayon::prelude::*;

/// Runs kernel chunks on a dedicated rayon pool.
///
/// Chunk boundaries depend only on the buffer length, so output does not
/// depend on the thread count.
pub struct RayonSchedule {
    pool: rayon::ThreadPool,
}

impl RayonSchedule {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self { pool: rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()? })
    }

    pub fn pool(&self) -> &rayon::ThreadPool {
        &self.pool
    }
}

impl Schedule for RayonSchedule {
    fn run(&self, out: &mut [f64], chunk: usize, kernel: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        let c = chunk.max(1);
        self.pool.install(|| out.par_chunks_mut(c).enumerate().for_each(|(k, s)| kernel(k * c, s)));
    }
}

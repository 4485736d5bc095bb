//! `algebra-check`: calculus identities on seeded random instances.

use std::io::Write;

use phaselattice::graph_calculus::{self as gc, Classification, EdgeSet, GraphVectorField, OneForm, ScalarField};
use phaselattice::lattice::{self, BoundaryPolicy, LatticeWindow, ProbabilityVectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

pub const TOL: f64 = 1e-12;
/// PSD is checked through an eigen solver, which is less exact than the algebra.
pub const EIG_TOL: f64 = 1e-10;

pub struct Options {
    pub sizes: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    pub corrupt_bullet: bool,
}

/// Largest residual seen for one identity, with the instance that produced it.
struct Tally {
    name: &'static str,
    tol: f64,
    worst: f64,
    at: Option<String>,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, at: None }
    }

    fn see(&mut self, r: f64, instance: impl FnOnce() -> String) {
        // NaN counts as a failure
        if !(r <= self.worst) {
            if self.at.is_none() || !(r < self.tol) {
                self.at = Some(instance());
            }
            self.worst = r;
        }
    }

    fn ok(&self) -> bool {
        self.worst < self.tol
    }
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize) -> Result<EdgeSet, CliError> {
    let density = rng.gen_range(0.2..1.0);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                pairs.push((i, j));
            }
        }
    }
    Ok(EdgeSet::from_pairs(n, pairs)?)
}

fn random_form(rng: &mut ChaCha8Rng, e: &EdgeSet) -> Result<OneForm, CliError> {
    let c: Vec<_> = e.iter().map(|k| (k, rng.gen_range(-1.0..1.0))).collect();
    Ok(OneForm::from_coeffs(e, c)?)
}

fn random_probs(rng: &mut ChaCha8Rng, w: &LatticeWindow) -> Result<ProbabilityVectorField, CliError> {
    let d = w.dim();
    let mut p = vec![0.0; w.n_sites() * d];
    for site in p.chunks_mut(d) {
        // some sites carry a single certain direction
        if rng.gen_bool(1.0 / 3.0) {
            site[rng.gen_range(0..d)] = 1.0;
            continue;
        }
        for v in site.iter_mut() {
            *v = -rng.gen_range(1e-3..1.0f64).ln();
        }
        let s: f64 = site.iter().sum();
        site.iter_mut().for_each(|v| *v /= s);
    }
    Ok(ProbabilityVectorField::new(w, p)?)
}

/// `(endomorphism, automorphism)` for the {0,1} field with the given arrows.
///
/// Reads the answer off the coefficient rule (at most one arrow leaving a
/// site) and the induced site map (a bijection), without the library classifier.
fn brute_force_class(n: usize, arrows: &[(usize, usize)]) -> (bool, bool) {
    let mut target: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in arrows {
        target[i].push(j);
    }
    if target.iter().any(|t| t.len() > 1) {
        return (false, false);
    }
    let image: Vec<usize> = (0..n).map(|i| target[i].first().copied().unwrap_or(i)).collect();
    let mut hit = vec![false; n];
    image.iter().for_each(|&j| hit[j] = true);
    (true, hit.iter().all(|h| *h))
}

pub fn check(o: &Options, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if o.sizes.is_empty() || o.sizes.iter().any(|s| *s == 0 || *s > 16) {
        return Err(CliError::Config(format!("sizes must be between 1 and 16, got {:?}", o.sizes)));
    }
    if o.instances == 0 {
        return Err(CliError::Config("instances must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut leibniz = Tally::new("Leibniz defect", TOL);
    let mut comm = Tally::new("bullet commutativity", TOL);
    let mut assoc = Tally::new("bullet associativity", TOL);
    let mut module = Tally::new("module actions", TOL);
    for k in 0..o.instances {
        let n = o.sizes[k % o.sizes.len()];
        let e = random_digraph(&mut rng, n)?;
        let f = ScalarField::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let g = ScalarField::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let bullet = |a: &OneForm, b: &OneForm| -> Result<OneForm, CliError> {
            let p = gc::bullet(a, b)?;
            if o.corrupt_bullet {
                return Ok(p.add(&OneForm::from_coeffs(&e, e.iter().map(|k| (k, 1e-6)).collect::<Vec<_>>())?)?);
            }
            Ok(p)
        };
        let instance = || format!("instance {k}: sites {n}, arrows {:?}, f {:?}, g {:?}", e.iter().collect::<Vec<_>>(), f.values, g.values);

        let lhs = gc::leibniz_defect(&f, &g, &e)?;
        let rhs = bullet(&gc::exterior_derivative(&f, &e)?, &gc::exterior_derivative(&g, &e)?)?;
        leibniz.see(lhs.sub(&rhs)?.max_abs(), instance);

        let (a, b, c) = (random_form(&mut rng, &e)?, random_form(&mut rng, &e)?, random_form(&mut rng, &e)?);
        comm.see(bullet(&a, &b)?.sub(&bullet(&b, &a)?)?.max_abs(), instance);
        let l = bullet(&bullet(&a, &b)?, &c)?;
        let r = bullet(&a, &bullet(&b, &c)?)?;
        assoc.see(l.sub(&r)?.max_abs(), instance);

        let (fl, fr) = (a.left_mul(&f)?, a.right_mul(&f)?);
        let mut m: f64 = 0.0;
        for (i, j) in e.iter() {
            m = m.max((fl.get(i, j) - f.values[i] * a.get(i, j)).abs());
            m = m.max((fr.get(i, j) - f.values[j] * a.get(i, j)).abs());
        }
        // left and right actions commute
        m = m.max(a.left_mul(&f)?.right_mul(&g)?.sub(&a.right_mul(&g)?.left_mul(&f)?)?.max_abs());
        module.see(m, instance);
    }

    let mut sym = Tally::new("correlation symmetry", TOL);
    let mut psd = Tally::new("correlation PSD", EIG_TOL);
    let mut kernel = Tally::new("correlation kernel (1,...,1)", TOL);
    let mut paths = Tally::new("correlation two paths", TOL);
    let mut vanish = Tally::new("correlation vanishes iff flow", 0.5);
    for k in 0..o.instances {
        let n = 1 + k % 4;
        let w = LatticeWindow::cube(n + 1, 3, BoundaryPolicy::ShrinkingDomain)?;
        let x = random_probs(&mut rng, &w)?;
        let instance = || format!("correlation instance {k}: N {n}, probabilities {:?}", (0..w.n_sites()).map(|s| x.at(s).to_vec()).collect::<Vec<_>>());
        let cm = lattice::correlation_matrix(&x);
        let alt = lattice::correlation_matrix_via_forms(&x)?;
        sym.see(cm.max_asymmetry(), instance);
        kernel.see(cm.kernel_residual(), instance);
        paths.see(cm.entries.iter().zip(&alt.entries).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())), instance);
        let mut neg: f64 = 0.0;
        let mut wrong = 0.0;
        for s in 0..cm.n_sites() {
            neg = neg.max(-cm.min_eigenvalue(s));
            let flow = x.at(s).iter().any(|&p| p == 1.0);
            if cm.is_zero_at(s) != flow {
                wrong = 1.0;
            }
        }
        psd.see(neg, instance);
        vanish.see(wrong, instance);
    }

    let mut flows = Tally::new("flow classification", 0.5);
    for n in [3, 4] {
        let e = EdgeSet::universal(n)?;
        let arrows: Vec<_> = e.iter().collect();
        for mask in 0u32..(1 << arrows.len()) {
            let chosen: Vec<_> = arrows.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, p)| *p).collect();
            let x = GraphVectorField::from_coeffs(&e, chosen.iter().map(|&p| (p, 1.0)))?;
            let (endo, auto) = brute_force_class(n, &chosen);
            let class = gc::classify_generator(&x);
            let bad = class.is_flow() != auto || (class != Classification::General) != endo;
            flows.see(if bad { 1.0 } else { 0.0 }, || format!("{n} sites, arrows {chosen:?}, classified {class:?}"));
        }
    }

    let all = [leibniz, comm, assoc, module, sym, psd, kernel, paths, vanish, flows];
    let mut failed = Vec::new();
    for t in &all {
        writeln!(out, "{:<32} max residual {:.3e}  {}", t.name, t.worst, if t.ok() { "ok" } else { "FAIL" })?;
        if !t.ok() {
            writeln!(err, "{} failed at {}", t.name, t.at.as_deref().unwrap_or("?"))?;
            writeln!(err, "replay with --seed {} --instances {} --sizes {}", o.seed, o.instances, o.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))?;
            failed.push(t.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!("failed: {}", failed.join(", "))))
    }
}

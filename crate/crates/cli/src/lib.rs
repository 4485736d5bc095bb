//! Command-line front end for `phaselattice`.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 configuration
//! error, 3 the dynamics left its admissible domain.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod algebra;
pub mod config;
pub mod report;
pub mod scenario;
pub mod schedule;

pub use schedule::RayonSchedule;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Property(String),
    #[error("{0}")]
    Domain(phaselattice::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 2,
            CliError::Domain(_) => 3,
        }
    }

    fn is_broken_pipe(&self) -> bool {
        match self {
            CliError::Io(e) => e.kind() == io::ErrorKind::BrokenPipe,
            CliError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(e) if e.kind() == io::ErrorKind::BrokenPipe),
            _ => false,
        }
    }
}

impl From<phaselattice::Error> for CliError {
    fn from(e: phaselattice::Error) -> Self {
        use phaselattice::Error as E;
        match e {
            E::ProbabilityOutOfRange { .. } | E::BoundaryReached { .. } | E::Exhausted { .. } => CliError::Domain(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phaselattice", version, about = "Exact lattice kinetics: scenarios, convergence and diagnostics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat TOML file of scenario keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the CSV or report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for step kernels and independent grid points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Override a config key, e.g. `--set eps=0.025`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the calculus identities on seeded random instances.
    AlgebraCheck {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4, 5, 6, 7, 8])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Perturb the bullet product (negative control).
        #[arg(long, hide = true)]
        corrupt_bullet: bool,
    },
    /// Evolve a point mass and write per-step moments.
    Simulate,
    /// Error against the reference solution over the ε grid.
    Converge,
    /// Print the deterministic-position gauge families of phase-space charts.
    KramersGauge,
    /// Order analysis of scaling limits and the θ tests.
    ScalingDiagnose {
        /// Rows to report (default: all).
        rows: Vec<String>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        // a closed pipe (`... | head`) is not a failure
        Err(e) if e.is_broken_pipe() => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let c = &cli.common;
    if c.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut file;
    let sink: &mut dyn Write = match &c.out {
        Some(p) => {
            file = BufWriter::new(File::create(p).map_err(|e| CliError::Config(format!("cannot create {}: {e}", p.display())))?);
            &mut file
        }
        None => out,
    };
    match &cli.command {
        Command::AlgebraCheck { sizes, instances, corrupt_bullet } => {
            algebra::check(&algebra::Options { sizes: sizes.clone(), instances: *instances, seed: c.seed, corrupt_bullet: *corrupt_bullet }, sink, err)?
        }
        Command::Simulate => {
            let sc = scenario::Scenario::from_config(&config::load(c.config.as_deref(), &c.overrides)?)?;
            report::simulate(&sc, c.jobs, sink)?
        }
        Command::Converge => {
            let sc = scenario::Scenario::from_config(&config::load(c.config.as_deref(), &c.overrides)?)?;
            report::converge(&sc, c.jobs, sink, err)?
        }
        Command::KramersGauge => report::kramers_gauge(&config::load(c.config.as_deref(), &c.overrides)?, sink)?,
        Command::ScalingDiagnose { rows } => {
            let cfg = config::load(c.config.as_deref(), &c.overrides)?;
            report::scaling_diagnose(&cfg, rows, c.seed, sink, err)?
        }
    }
    sink.flush()?;
    Ok(())
}

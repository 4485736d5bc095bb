//! The `simulate`, `converge`, `kramers-gauge` and `scaling-diagnose` commands.

use std::io::Write;

use phaselattice::charts::CoordinateChart;
use phaselattice::dynamics::{classify_gauge, family_summary, kramers_gauge_solve, KramersGauge};
use phaselattice::evolve::{assemble_table, converge_point, run_scenario, steps_for, Domain, Evolver, Mode, MomentReport, RunOptions, Schedule, Serial, Slice};
use phaselattice::scaling::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{positive, RawConfig};
use crate::scenario::{DomainRule, Scenario};
use crate::{CliError, RayonSchedule};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn pool(jobs: usize) -> Result<Option<RayonSchedule>, CliError> {
    if jobs <= 1 {
        return Ok(None);
    }
    RayonSchedule::new(jobs).map(Some).map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

pub fn moment_header(axes: &[String]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "mass".to_string()];
    h.extend(axes.iter().map(|a| format!("mean_{a}")));
    for i in 0..axes.len() {
        for j in i..axes.len() {
            h.push(format!("cov_{}_{}", axes[i], axes[j]));
        }
    }
    h.push("min".into());
    h.push("max".into());
    h
}

pub fn write_moments(rep: &MomentReport, axes: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(moment_header(axes))?;
    for r in &rep.rows {
        let mut rec = vec![num(r.t), num(r.mass)];
        rec.extend(r.mean.iter().map(|v| num(*v)));
        rec.extend(r.cov.iter().map(|v| num(*v)));
        rec.push(num(r.min));
        rec.push(num(r.max));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the scenario at its `eps` and returns the moment report.
pub fn run_simulation(sc: &Scenario, sched: &dyn Schedule) -> Result<MomentReport, CliError> {
    let chart = sc.family.chart_at(sc.eps)?;
    let ev = Evolver::new(&chart, &sc.drift, sched)?;
    let steps = match sc.steps {
        Some(s) => s,
        None => steps_for(sc.horizon, chart.b())?,
    };
    let (start, _) = ev.geom.nearest(&sc.start, 0);
    let domain = match &sc.domain {
        DomainRule::Unbounded => None,
        DomainRule::Admissible => {
            let b = ev.rule.admissible_bounds();
            let d = Domain { lo: b.iter().map(|v| v.0).collect(), hi: b.iter().map(|v| v.1).collect() };
            ev.rule.check_box(&d.lo, &d.hi)?;
            Some(d)
        }
        DomainRule::Checked(d) => {
            ev.rule.check_box(&d.lo, &d.hi)?;
            Some(d.clone())
        }
        DomainRule::Clipped(d) => Some(d.clipped(&ev.rule.admissible_bounds())),
    };
    let opts = RunOptions { steps, mode: Mode::Distribution, trim_tol: sc.trim_tol, domain, report_every: sc.report_every };
    let (rep, _) = run_scenario(&ev, Slice::delta(&start, 0), &opts)?;
    Ok(rep)
}

pub fn simulate(sc: &Scenario, jobs: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let rep = match pool(jobs)? {
        Some(p) => run_simulation(sc, &p)?,
        None => run_simulation(sc, &Serial)?,
    };
    write_moments(&rep, &sc.axes, out)
}

/// Grid points run concurrently when `jobs > 1`; rows keep grid order.
pub fn converge(sc: &Scenario, jobs: usize, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let setup = sc.converge_setup()?;
    let fam = sc.family.as_ref();
    let points: Vec<_> = match pool(jobs)? {
        Some(p) => p.pool().install(|| sc.eps_grid.par_iter().map(|e| converge_point(fam, &setup, *e, &Serial)).collect()),
        None => sc.eps_grid.iter().map(|e| converge_point(fam, &setup, *e, &Serial)).collect(),
    };
    let mut pairs = Vec::with_capacity(points.len());
    for p in points {
        let p = p?;
        pairs.push((p.eps, p.error));
    }
    let table = assemble_table(&pairs);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "error", "empirical_order"])?;
    for r in &table.rows {
        w.write_record([num(r.eps), num(r.error), r.order.map(num).unwrap_or_default()])?;
    }
    w.flush()?;
    for k in &table.non_monotone {
        writeln!(err, "warning: error did not decrease at eps = {} ({} -> {})", table.rows[*k].eps, table.rows[k - 1].error, table.rows[*k].error)?;
    }
    Ok(())
}

pub fn kramers_gauge(c: &RawConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let h11 = positive("h", c.h.unwrap_or(1.0))?;
    let h22 = positive("h22", c.h22.unwrap_or(1.0))?;
    let fams = kramers_gauge_solve();
    writeln!(out, "families: {}", fams.len())?;
    for (k, f) in fams.iter().enumerate() {
        writeln!(out, "{}. {}", k + 1, family_summary(f))?;
    }
    let g = KramersGauge { kappa: 0.0, lambda: 1.0, mu: 0.0, kappa_p: 1.0, lambda_p: 0.0, mu_p: -1.0 };
    // adding 0.0 turns -0 into 0 for display
    let p = g.probabilities()?.map(|v| v + 0.0);
    let eta = g.eta(h11, h22)?;
    writeln!(out, "sample gauge (kappa, lambda, mu; kappa', lambda', mu') = (0, 1, 0; 1, 0, -1)")?;
    match classify_gauge(&g) {
        Some((case, perm)) => writeln!(out, "  family: {case:?}, coordinate order {perm:?}")?,
        None => writeln!(out, "  family: none")?,
    }
    writeln!(out, "  (p, q, r) = ({}, {}, {})", p[0], p[1], p[2])?;
    writeln!(out, "  eta11 = {}, eta12 = {}, eta22 = {} (h22 = {h22})", eta[(0, 0)], eta[(0, 1)], eta[(1, 1)])?;
    if fams.len() != 2 {
        return Err(CliError::Property(format!("expected two gauge families, found {}", fams.len())));
    }
    Ok(())
}

pub const SCALING_ROWS: [&str; 6] = ["sqrt", "sqrt_nd", "cubic", "cubic_constrained", "lightcone_cubic", "zero"];

fn generic_constants(seed: u64, dim: usize) -> StructureConstants {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0.0; dim * dim * dim];
    for mu in 0..dim {
        for nu in mu..dim {
            for rho in 0..dim {
                let v = rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                c[(mu * dim + nu) * dim + rho] = v;
                c[(nu * dim + mu) * dim + rho] = v;
            }
        }
    }
    StructureConstants::new(dim, c, false).expect("symmetric by construction")
}

fn scaling_row(name: &str, seed: u64) -> Result<(StructureConstants, ScalingPartition, &'static str), CliError> {
    let lightcone = || StructureConstants::from_chart(&CoordinateChart::lightcone_1d(1.0, 1.0).expect("valid"), true);
    let three = ScalingPartition::three_group(3, &[2])?;
    Ok(match name {
        "sqrt" => (lightcone(), ScalingPartition::two_group(2), "two"),
        "sqrt_nd" => (StructureConstants::from_chart(&CoordinateChart::simplex(&[1.0, 1.0], 1.0)?, true), ScalingPartition::two_group(3), "two"),
        "cubic" => (generic_constants(seed, 3), three, "three"),
        "cubic_constrained" => {
            let c = generic_constants(seed, 3);
            let cons = order_analysis(&c, &three)?.required_constraints;
            (c.with_constraints(&cons), three, "three")
        }
        "lightcone_cubic" => (lightcone(), ScalingPartition::three_group(2, &[])?, "three"),
        "zero" => (StructureConstants::zero(3), three, "three"),
        other => return Err(CliError::Config(format!("unknown row {other:?}; known rows: {}", SCALING_ROWS.join(", ")))),
    })
}

pub fn scaling_diagnose(c: &RawConfig, rows: &[String], seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let names: Vec<String> = if !rows.is_empty() {
        rows.to_vec()
    } else {
        c.rows.clone().unwrap_or_else(|| SCALING_ROWS.iter().map(|s| s.to_string()).collect())
    };
    let mut entries = Vec::new();
    let mut parts = Vec::new();
    for n in &names {
        let (sc, p, label) = scaling_row(n, seed)?;
        entries.push((n.clone(), sc, p));
        parts.push(label);
    }
    let table = second_order_uniqueness_report(&entries)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "partition", "status", "surviving_order", "psd", "constraints"])?;
    for (r, part) in table.iter().zip(&parts) {
        let cons: Vec<String> = r.verdict.required_constraints.iter().map(|k| format!("{} = O(eps^{})", k.symbol, k.exponent)).collect();
        w.write_record([r.name.clone(), part.to_string(), r.verdict.status.label().into(), r.order.to_string(), r.psd.to_string(), cons.join("; ")])?;
    }
    w.flush()?;

    for r in &table {
        let v = &r.verdict;
        let detail = match v.status {
            VerdictStatus::Ok => format!("limit exists, highest derivative order {}, second-order part {}", r.order, if r.psd { "PSD" } else { "indefinite" }),
            _ => {
                let mut terms: Vec<&str> = v.divergent_terms.iter().map(|t| t.symbol.as_str()).collect();
                terms.dedup();
                format!("divergent terms {}", terms.join(", "))
            }
        };
        writeln!(err, "{}: {} ({detail})", r.name, v.status.label())?;
    }
    let alpha = positive("alpha", c.alpha.unwrap_or(1.0))?;
    let grid = [0.1, 0.05, 0.025, 0.0125];
    for (label, fam) in [("lightcone cubic", CubicFamily::lightcone(alpha)), ("tilted cubic", CubicFamily::tilted(alpha))] {
        let t = theta_report(&fam, &grid, &sample_directions(fam.alpha().len(), 20))?;
        writeln!(err, "theta, {label}: growth {:.4}, finest |theta3| {:.3e}: {}", t.theta2_growth, t.theta3_finest, t.note)?;
    }
    Ok(())
}

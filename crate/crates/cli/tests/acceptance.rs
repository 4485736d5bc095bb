//! Acceptance criteria 1-11, one line each. Exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use phaselattice::charts::{CoordinateChart, KramersFamily, ScalingFamily, SqrtFamily};
use phaselattice::dynamics::*;
use phaselattice::evolve::*;
use phaselattice::graph_calculus::{self as gc, EdgeSet, GraphVectorField, OneForm, ScalarField};
use phaselattice::lattice::{self, BoundaryPolicy, LatticeField, LatticeWindow, ProbabilityVectorField};
use phaselattice::scaling::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, c1_identities),
        (2, c2_flow_classification),
        (3, c3_correlation),
        (4, c4_symmetric_walk),
        (5, c5_smoluchowski),
        (6, c6_ou),
        (7, c7_kramers),
        (8, c8_zero_diagonal),
        (9, c9_scaling),
        (10, c10_chart_expansion),
        (11, c11_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (k, f) in criteria {
        let t0 = Instant::now();
        let o = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!("criterion {k:>2}: {}  {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t0.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(k);
        }
    }
    if failed.is_empty() {
        println!("all criteria pass");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize) -> (EdgeSet, Vec<(usize, usize)>) {
    let density = rng.gen_range(0.2..1.0);
    let pairs: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).filter(|_| rng.gen_bool(density)).collect();
    (EdgeSet::from_pairs(n, pairs.clone()).unwrap(), pairs)
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn c1_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let instances = 200;
    let (mut leib, mut comm, mut assoc, mut module) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..instances {
        let n = 1 + k % 8;
        let (e, pairs) = random_digraph(&mut rng, n);
        let (fv, gv) = (random_values(&mut rng, n), random_values(&mut rng, n));
        let (f, g) = (ScalarField::new(fv.clone()).unwrap(), ScalarField::new(gv.clone()).unwrap());
        let df = gc::exterior_derivative(&f, &e).unwrap();
        let dg = gc::exterior_derivative(&g, &e).unwrap();
        let defect = gc::leibniz_defect(&f, &g, &e).unwrap();
        let prod = gc::bullet(&df, &dg).unwrap();
        let forms: Vec<Vec<f64>> = (0..3).map(|_| random_values(&mut rng, pairs.len())).collect();
        let [a, b, c]: [OneForm; 3] = core::array::from_fn(|m| OneForm::from_coeffs(&e, pairs.iter().copied().zip(forms[m].iter().copied())).unwrap());
        let ab = gc::bullet(&a, &b).unwrap();
        let ba = gc::bullet(&b, &a).unwrap();
        let ab_c = gc::bullet(&ab, &c).unwrap();
        let a_bc = gc::bullet(&a, &gc::bullet(&b, &c).unwrap()).unwrap();
        let (fa, af) = (a.left_mul(&f).unwrap(), a.right_mul(&f).unwrap());
        let a_df = gc::bullet(&a, &df).unwrap();
        let fag = a.left_mul(&f).unwrap().right_mul(&g).unwrap();
        for (m, &(i, j)) in pairs.iter().enumerate() {
            // edgewise oracle: d(fg) - f dg - g df on the edge i -> j
            let want = (fv[j] - fv[i]) * (gv[j] - gv[i]);
            leib = leib.max((defect.get(i, j) - want).abs()).max((prod.get(i, j) - want).abs());
            let (x, y, z) = (forms[0][m], forms[1][m], forms[2][m]);
            comm = comm.max((ab.get(i, j) - ba.get(i, j)).abs()).max((ab.get(i, j) - x * y).abs());
            assoc = assoc.max((ab_c.get(i, j) - a_bc.get(i, j)).abs()).max((ab_c.get(i, j) - x * y * z).abs());
            module = module
                .max((fa.get(i, j) - fv[i] * x).abs())
                .max((af.get(i, j) - x * fv[j]).abs())
                .max((a_df.get(i, j) - (af.get(i, j) - fa.get(i, j))).abs())
                .max((fag.get(i, j) - fv[i] * x * gv[j]).abs());
        }
    }
    let worst = leib.max(comm).max(assoc).max(module);
    outcome(
        worst < 1e-12,
        format!("{instances} digraphs of 1-8 sites; residuals: Leibniz {leib:.1e}, commutativity {comm:.1e}, associativity {assoc:.1e}, module {module:.1e} (tol 1e-12)"),
    )
}

/// `(endomorphism, automorphism)` of `f ↦ f + X f` as a dense matrix.
fn matrix_class(n: usize, arrows: &[(usize, usize)]) -> (bool, bool) {
    let mut m = DMatrix::<f64>::identity(n, n);
    for &(i, j) in arrows {
        m[(i, j)] += 1.0;
        m[(i, i)] -= 1.0;
    }
    // multiplicative on the indicator basis: M(e_a e_b) = (M e_a)(M e_b)
    let mut endo = true;
    for a in 0..n {
        for b in 0..n {
            for i in 0..n {
                let lhs = if a == b { m[(i, a)] } else { 0.0 };
                if (lhs - m[(i, a)] * m[(i, b)]).abs() > 1e-12 {
                    endo = false;
                }
            }
        }
    }
    (endo, endo && m.determinant().abs() > 1e-9)
}

fn c2_flow_classification() -> Outcome {
    let mut fields = 0;
    let mut mismatches = Vec::new();
    for n in [3, 4] {
        let e = EdgeSet::universal(n).unwrap();
        let arrows: Vec<_> = e.iter().collect();
        for mask in 0u32..(1 << arrows.len()) {
            let chosen: Vec<_> = arrows.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, p)| *p).collect();
            let x = GraphVectorField::from_coeffs(&e, chosen.iter().map(|&p| (p, 1.0))).unwrap();
            let (endo, auto) = matrix_class(n, &chosen);
            let class = gc::classify_generator(&x);
            if class.is_flow() != auto || (class != gc::Classification::General) != endo {
                mismatches.push((n, chosen));
            }
            fields += 1;
        }
    }
    outcome(mismatches.is_empty(), format!("{fields} {{0,1}} fields on 3 and 4 sites, {} disagreements with the matrix test {:?}", mismatches.len(), mismatches.first()))
}

fn c3_correlation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let (mut asym, mut neg, mut kern, mut paths, mut direct) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut wrong = 0;
    let (mut flows, mut sites) = (0, 0);
    for k in 0..100 {
        let nn = 1 + k % 4;
        let d = nn + 1;
        let w = LatticeWindow::cube(d, 2, BoundaryPolicy::ShrinkingDomain).unwrap();
        let mut p = vec![0.0; w.n_sites() * d];
        for site in p.chunks_mut(d) {
            if rng.gen_bool(0.3) {
                site[rng.gen_range(0..d)] = 1.0;
            } else {
                site.iter_mut().for_each(|v| *v = -rng.gen_range(1e-3..1.0f64).ln());
                let s: f64 = site.iter().sum();
                site.iter_mut().for_each(|v| *v /= s);
            }
        }
        let x = ProbabilityVectorField::new(&w, p.clone()).unwrap();
        let cm = lattice::correlation_matrix(&x);
        let alt = lattice::correlation_matrix_via_forms(&x).unwrap();
        for s in 0..w.n_sites() {
            sites += 1;
            let ps = &p[s * d..(s + 1) * d];
            let m = cm.at(s);
            let oracle = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(ps)) - {
                let v = nalgebra::DVector::from_column_slice(ps);
                &v * v.transpose()
            };
            direct = direct.max((&m - &oracle).amax());
            asym = asym.max((&m - m.transpose()).amax());
            neg = neg.max(-SymmetricEigen::new(m.clone()).eigenvalues.min());
            kern = kern.max((&m * nalgebra::DVector::from_element(d, 1.0)).amax());
            paths = paths.max((&m - alt.at(s)).amax());
            let flow = ps.iter().any(|v| *v == 1.0);
            flows += flow as usize;
            let zero = m.amax() <= 1e-12;
            if zero != flow || cm.is_zero_at(s) != flow {
                wrong += 1;
            }
        }
    }
    let pass = asym < 1e-12 && neg < 1e-12 && kern < 1e-12 && paths < 1e-12 && direct < 1e-12 && wrong == 0;
    outcome(
        pass,
        format!(
            "100 fields, {sites} sites ({flows} flows): asymmetry {asym:.1e}, min eigenvalue {:.1e}, kernel {kern:.1e}, path gap {paths:.1e}, oracle gap {direct:.1e}, vanish/flow mismatches {wrong}",
            -neg
        ),
    )
}

fn c4_symmetric_walk() -> Outcome {
    let mut var_rel = 0.0f64;
    let mut sq = 0.0f64;
    for (a, b) in [(0.1, 0.01), (0.25, 0.05), (1.0, 1.0)] {
        let c = CoordinateChart::lightcone_1d(a, b).unwrap();
        let ev = Evolver::new(&c, &DriftSpec::Free(1), &Serial).unwrap();
        let mut p = [0.0; 2];
        ev.rule.probs_at(&[0.0], &mut p);
        assert_eq!(p, [0.5, 0.5]);
        let opts = RunOptions { steps: 300, mode: Mode::Distribution, trim_tol: 0.0, domain: None, report_every: 1 };
        let (rep, _) = run_scenario(&ev, Slice::delta(&[0], 0), &opts).unwrap();
        let h = a * a / b;
        for (k, row) in rep.rows.iter().enumerate().skip(1) {
            // k fair ±a steps: binomial variance k a²
            let want = k as f64 * a * a;
            var_rel = var_rel.max((row.cov[0] - want).abs() / want).max((row.cov[0] - h * row.t).abs() / (h * row.t));
        }

        let mut s = Slice::from_fn(&ev.geom, &[-60], &[121], 0, |x| x[0] * x[0]);
        let mut v = [0i64];
        let mut x = [0.0];
        for k in 1..=40 {
            s = ev.step_observable(&s).unwrap();
            for i in 0..s.n_sites() {
                s.coords(i, &mut v);
                ev.geom.position(&v, s.layer, &mut x);
                let want = x[0] * x[0] + k as f64 * a * a;
                sq = sq.max((s.values[i] - want).abs() / want.max(1.0));
            }
        }
    }
    outcome(var_rel <= 1e-12 && sq <= 1e-12, format!("variance vs h t and k a^2: worst relative {var_rel:.1e}; x^2 gain: worst {sq:.1e} (tol 1e-12)"))
}

fn c5_smoluchowski() -> Outcome {
    let (gamma, h, s0, region, horizon) = (0.5, 1.0, 0.5, 2.0, 1.0);
    let fam = SqrtFamily::lightcone(h).unwrap();
    let mut drift_err = 0.0f64;
    for eps in [0.1, 0.05, 0.025] {
        let c = fam.chart_at(eps).unwrap();
        let ev = Evolver::new(&c, &DriftSpec::constant_force(gamma, h), &Serial).unwrap();
        let opts = RunOptions { steps: 200, mode: Mode::Distribution, trim_tol: 0.0, domain: None, report_every: 1 };
        let (rep, _) = run_scenario(&ev, Slice::delta(&[0], 0), &opts).unwrap();
        for row in &rep.rows {
            drift_err = drift_err.max((row.mean[0] + 2.0 * gamma * h * row.t).abs() / (1.0 + row.t));
        }
    }

    // errors measured here against the Gaussian, then compared with converge()
    let grid = [0.1, 0.05, 0.025];
    let r = -2.0 * gamma * h;
    let mut errs = Vec::new();
    for eps in grid {
        let c = fam.chart_at(eps).unwrap();
        let ev = Evolver::new(&c, &DriftSpec::constant_force(gamma, h), &Serial).unwrap();
        let steps = (horizon / c.b()).round() as usize;
        let a = c.a()[0];
        let half = ((region + 1.0) / a).ceil() as i64 + steps as i64;
        let mut s = Slice::from_fn(&ev.geom, &[-half], &[(2 * half + 1) as usize], 0, |x| (-x[0] * x[0] / (2.0 * s0 * s0)).exp());
        for _ in 0..steps {
            s = ev.step_observable(&s).unwrap();
        }
        let var = s0 * s0 + h * horizon;
        let mut e = 0.0f64;
        let mut v = [0i64];
        let mut x = [0.0];
        for k in 0..s.n_sites() {
            s.coords(k, &mut v);
            ev.geom.position(&v, s.layer, &mut x);
            if x[0].abs() <= region {
                let exact = s0 / var.sqrt() * (-(x[0] + r * horizon).powi(2) / (2.0 * var)).exp();
                e = e.max((s.values[k] - exact).abs());
            }
        }
        errs.push(e);
    }
    let orders: Vec<f64> = (1..3).map(|k| (errs[k - 1] / errs[k]).ln() / (grid[k - 1] / grid[k]).ln()).collect();
    let setup = ConvergeSetup { analytic: Analytic::SmoluchowskiConst { h, gamma, s0, region }, horizon, domain: None, trim_tol: 0.0 };
    let table = converge(&fam, &setup, &grid, &Serial).unwrap();
    let agree = table.rows.iter().zip(&errs).all(|(r, e)| (r.error - e).abs() <= 1e-9 * e);
    let pass = drift_err <= 1e-12 && orders.iter().all(|o| *o >= 1.0) && agree && table.rows[1..].iter().all(|r| r.order.unwrap() >= 1.0);
    outcome(pass, format!("mean drift residual {drift_err:.1e}; errors {:.3e} {:.3e} {:.3e}, orders {orders:.3?}, converge() agrees: {agree}", errs[0], errs[1], errs[2]))
}

/// RK4 on `m' = -2βm`, `v' = h - 4βv`.
fn ou_moment_ode(beta: f64, h: f64, x0: f64, t: f64) -> (f64, f64) {
    let f = |m: f64, v: f64| (-2.0 * beta * m, h - 4.0 * beta * v);
    let n = 4000;
    let dt = t / n as f64;
    let (mut m, mut v) = (x0, 0.0);
    for _ in 0..n {
        let k1 = f(m, v);
        let k2 = f(m + 0.5 * dt * k1.0, v + 0.5 * dt * k1.1);
        let k3 = f(m + 0.5 * dt * k2.0, v + 0.5 * dt * k2.1);
        let k4 = f(m + dt * k3.0, v + dt * k3.1);
        m += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (m, v)
}

fn c6_ou() -> Outcome {
    let (beta, h) = (1.0, 1.0);
    let fam = SqrtFamily::lightcone(h).unwrap();
    let mut factor = 0.0f64;
    for eps in [0.1, 0.05] {
        let c = fam.chart_at(eps).unwrap();
        let ev = Evolver::new(&c, &DriftSpec::ou(beta), &Serial).unwrap();
        let start = ev.geom.coords(&[1.0], 0).unwrap();
        let opts = RunOptions { steps: 80, mode: Mode::Distribution, trim_tol: 0.0, domain: None, report_every: 1 };
        let (rep, _) = run_scenario(&ev, Slice::delta(&start, 0), &opts).unwrap();
        for w in rep.rows.windows(2) {
            factor = factor.max((w[1].mean[0] - (1.0 - 2.0 * beta * c.b()) * w[0].mean[0]).abs());
        }
    }

    let setup = ConvergeSetup { analytic: Analytic::Ou { beta, h, x0: 1.0 }, horizon: 1.0, domain: None, trim_tol: 0.0 };
    let pt = converge_point(&fam, &setup, 0.0125, &Serial).unwrap();
    let row = pt.lattice.unwrap();
    let (m, v) = ((-2.0 * beta).exp(), h / (4.0 * beta) * (1.0 - (-4.0 * beta).exp()));
    let (om, ov) = ou_moment_ode(beta, h, 1.0, 1.0);
    let oracle_gap = ((om - m).abs() / m).max((ov - v).abs() / v);
    let (em, ev) = ((row.mean[0] - m).abs() / m, (row.cov[0] - v).abs() / v);
    let pass = factor < 1e-13 && oracle_gap < 1e-8 && em < 0.01 && ev < 0.01;
    outcome(pass, format!("per-step factor residual {factor:.1e}; eps 0.0125: mean {:.6} vs {m:.6} ({:.3}%), variance {:.6} vs {v:.6} ({:.3}%), ODE vs closed form {oracle_gap:.1e}", row.mean[0], 100.0 * em, row.cov[0], 100.0 * ev))
}

/// Mean and covariance of `dz = (r0 + J z) dt + D^{1/2} dW` from a point, by matrix exponentials.
fn linear_sde_oracle(r0: &[f64], jac: &DMatrix<f64>, diff: &DMatrix<f64>, z0: &[f64], t: f64) -> (Vec<f64>, DMatrix<f64>) {
    let n = r0.len();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(jac);
    for i in 0..n {
        aug[(i, n)] = r0[i];
    }
    let e = (aug * t).exp();
    let mean = (0..n).map(|i| (0..n).map(|k| e[(i, k)] * z0[k]).sum::<f64>() + e[(i, n)]).collect();
    // Van Loan: exp([[-J, D], [0, Jᵀ]] t) = [[., F12], [0, F22]], Σ = F22ᵀ F12
    let mut vl = DMatrix::zeros(2 * n, 2 * n);
    vl.view_mut((0, 0), (n, n)).copy_from(&(-jac));
    vl.view_mut((0, n), (n, n)).copy_from(diff);
    vl.view_mut((n, n), (n, n)).copy_from(&jac.transpose());
    let f = (vl * t).exp();
    let cov = f.view((n, n), (n, n)).transpose() * f.view((0, n), (n, n));
    (mean, cov)
}

fn c7_kramers() -> Outcome {
    let fams = kramers_gauge_solve();
    let cases: Vec<KramersCase> = fams.iter().map(|f| f.case).collect();
    let two = cases.len() == 2 && cases.contains(&KramersCase::Liouville) && cases.contains(&KramersCase::Kramers);

    // every small-integer gauge with positive weights and η11 = 0 lies in a family
    let vals = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let (mut deterministic, mut missed, mut spurious) = (0, 0, 0);
    for code in 0..5usize.pow(6) {
        let d: Vec<f64> = (0..6).map(|k| vals[code / 5usize.pow(k) % 5]).collect();
        let g = KramersGauge { kappa: d[0], lambda: d[1], mu: d[2], kappa_p: d[3], lambda_p: d[4], mu_p: d[5] };
        let Ok(p) = g.probabilities() else { continue };
        if p.iter().any(|v| *v < 0.0) {
            continue;
        }
        let eta = g.eta(1.0, 1.0).unwrap();
        let zero11 = eta[(0, 0)].abs() < 1e-12;
        deterministic += zero11 as usize;
        match (zero11, classify_gauge(&g).is_some()) {
            (true, false) => missed += 1,
            (false, true) => spurious += 1,
            _ => {}
        }
    }

    let g = KramersGauge { kappa: 0.0, lambda: 1.0, mu: 0.0, kappa_p: 1.0, lambda_p: 0.0, mu_p: -1.0 };
    let p = g.probabilities().unwrap();
    let sample_ok = (p[0] - 0.5).abs() < 1e-15
        && p[1].abs() < 1e-15
        && (p[2] - 0.5).abs() < 1e-15
        && [1.0, 2.5].iter().all(|h22| {
            let eta = g.eta(1.0, *h22).unwrap();
            (eta[(1, 1)] - h22).abs() < 1e-14 && eta[(0, 0)].abs() < 1e-15 && eta[(0, 1)].abs() < 1e-15
        });

    // F = -x, β = 0.5 at the finest default ε
    let (beta, h22, eps) = (0.5, 1.0, 0.0125);
    let fam = KramersFamily { h_x: 0.04, h22, margin: 7.0, lambda_prime: 0.0, compensate: true };
    let setup = ConvergeSetup {
        analytic: Analytic::KramersMoments { beta, c0: 0.0, c1: -1.0, h22, x0: 1.0, y0: 0.0 },
        horizon: 1.0,
        domain: Some(Domain { lo: vec![-6.0, -7.0], hi: vec![7.0, 7.0] }),
        trim_tol: 1e-14,
    };
    let pt = converge_point(&fam, &setup, eps, &Serial).unwrap();
    let row = pt.lattice.unwrap();
    let geom = SliceGeometry::new(&fam.chart_at(eps).unwrap()).unwrap();
    let (_, z0) = geom.nearest(&[1.0, 0.0], 0);
    let jac = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -beta]);
    let diff = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, h22]);
    let (m, c) = linear_sde_oracle(&[0.0, 0.0], &jac, &diff, &z0, 1.0);
    let mut rel = 0.0f64;
    for i in 0..2 {
        let sd = c[(i, i)].sqrt();
        rel = rel.max((row.mean[i] - m[i]).abs() / m[i].abs().max(sd));
        for j in i..2 {
            rel = rel.max((row.cov_at(i, j) - c[(i, j)]).abs() / (c[(i, i)] * c[(j, j)]).sqrt());
        }
    }
    let pass = two && missed == 0 && spurious == 0 && deterministic > 0 && sample_ok && rel < 0.02;
    outcome(
        pass,
        format!(
            "families {cases:?}; {deterministic} integer gauges with eta11 = 0, {missed} unclassified, {spurious} misclassified; sample gauge (p,q,r) = {:?}, eta22 = h22: {sample_ok}; \
             eps {eps}: mean ({:.4}, {:.4}) vs ({:.4}, {:.4}), cov ({:.4}, {:.4}, {:.4}) vs ({:.4}, {:.4}, {:.4}), worst relative {:.2}% (tol 2%)",
            p.map(|v| v + 0.0),
            row.mean[0],
            row.mean[1],
            m[0],
            m[1],
            row.cov_at(0, 0),
            row.cov_at(0, 1),
            row.cov_at(1, 1),
            c[(0, 0)],
            c[(0, 1)],
            c[(1, 1)],
            100.0 * rel
        ),
    )
}

fn psd(m: &DMatrix<f64>) -> bool {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().all(|v| *v >= -1e-12)
}

/// Largest off-diagonal entry in a row whose diagonal vanishes.
fn zero_row_leak(m: &DMatrix<f64>) -> (usize, f64) {
    let mut rows = 0;
    let mut leak = 0.0f64;
    for i in 0..m.nrows() {
        if m[(i, i)].abs() <= 1e-14 {
            rows += 1;
            leak = leak.max(m.row(i).amax());
        }
    }
    (rows, leak)
}

fn c8_zero_diagonal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let (mut matrices, mut rows, mut leak) = (0, 0, 0.0f64);
    let mut see = |m: &DMatrix<f64>| {
        if psd(m) {
            matrices += 1;
            let (r, l) = zero_row_leak(m);
            rows += r;
            leak = leak.max(l).max(zero_diagonal_leak(m, 1e-14));
        }
    };
    for k in 0..2000 {
        let mut g = KramersGauge {
            kappa: rng.gen_range(-2.0..2.0),
            lambda: rng.gen_range(-2.0..2.0),
            mu: rng.gen_range(-2.0..2.0),
            kappa_p: rng.gen_range(-2.0..2.0),
            lambda_p: rng.gen_range(-2.0..2.0),
            mu_p: rng.gen_range(-2.0..2.0),
        };
        if k % 2 == 0 {
            g.kappa = 0.0;
            g.mu = 0.0;
        }
        let Ok(p) = g.probabilities() else { continue };
        if p.iter().all(|v| *v >= 0.0) {
            see(&g.eta(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)).unwrap());
        }
    }
    // transported correlations of random charts, some with a certain direction
    for k in 0..300 {
        let n = 1 + k % 3;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let c = if k % 2 == 0 { CoordinateChart::simplex(&a, 0.1).unwrap() } else { CoordinateChart::appendix_b(&a, 0.1).unwrap() };
        let mut p = vec![0.0; n + 1];
        if k % 3 == 0 {
            p[rng.gen_range(0..=n)] = 1.0;
        } else {
            p.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
        }
        see(&c.transported_correlation(&p).unwrap());
    }
    let fams: Vec<Box<dyn ScalingFamily>> = vec![
        Box::new(SqrtFamily::lightcone(1.0).unwrap()),
        Box::new(SqrtFamily::appendix_b(&[1.0, 3.0]).unwrap()),
        Box::new(SqrtFamily::simplex(&[1.0, 2.0, 0.5]).unwrap()),
        Box::new(KramersFamily { h_x: 0.04, h22: 1.0, margin: 7.0, lambda_prime: 0.0, compensate: true }),
    ];
    for f in &fams {
        see(&f.eta_hat().unwrap());
    }
    outcome(rows > 50 && leak < 1e-10, format!("{matrices} PSD matrices, {rows} zero-diagonal rows, worst off-diagonal {leak:.1e} (tol 1e-10)"))
}

fn random_admissible_chart(rng: &mut ChaCha8Rng, n: usize) -> CoordinateChart {
    loop {
        let d = n + 1;
        let mut m = DMatrix::from_element(d, d, 1.0);
        for i in 1..d {
            for mu in 0..d {
                m[(i, mu)] = rng.gen_range(-2.0..2.0);
            }
        }
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let Ok(ch) = CoordinateChart::new(&a, rng.gen_range(0.001..0.1), m) else { continue };
        if ch.b0().iter().all(|v| *v >= 0.0) {
            return ch;
        }
    }
}

fn generic_constants(rng: &mut ChaCha8Rng, dim: usize) -> StructureConstants {
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
    StructureConstants::new(dim, c, false).unwrap()
}

/// `(max_ξ |θ₂|, max_ξ |θ₃|, min B^μ_0)` at one `β`, from the chart matrix directly.
fn theta_oracle(fam: &CubicFamily, beta: f64, dirs: &[Vec<f64>]) -> Option<(f64, f64, f64)> {
    let alpha = fam.alpha();
    let n = alpha.len();
    let am = fam.amat(beta);
    let inv = am.clone().try_inverse()?;
    let b0: Vec<f64> = (0..=n).map(|mu| inv[(mu, 0)]).collect();
    let (mut t2, mut t3) = (0.0f64, 0.0f64);
    for xi in dirs {
        let (mut s2, mut s3) = (0.0, 0.0);
        for mu in 0..=n {
            let s: f64 = (0..n).map(|i| xi[i] * alpha[i] * am[(i + 1, mu)]).sum();
            s2 += s * s * b0[mu];
            s3 += s * s * s * b0[mu];
        }
        t2 = t2.max((s2 / (2.0 * beta)).abs());
        t3 = t3.max((s3 / 6.0).abs());
    }
    Some((t2, t3, b0.iter().cloned().fold(f64::INFINITY, f64::min)))
}

fn c9_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let mut two_ok = 0;
    for k in 0..50 {
        let ch = random_admissible_chart(&mut rng, 1 + k % 3);
        let c = StructureConstants::from_chart(&ch, true);
        if order_analysis(&c, &ScalingPartition::two_group(c.dim)).unwrap().is_ok() {
            two_ok += 1;
        }
    }

    let part = ScalingPartition::three_group(3, &[2]).unwrap();
    let mut flagged = 0;
    for _ in 0..20 {
        let c = generic_constants(&mut rng, 3);
        let v = order_analysis(&c, &part).unwrap();
        let names: Vec<&str> = v.required_constraints.iter().map(|k| k.symbol.as_str()).collect();
        if v.status == VerdictStatus::RequiresConstraint && names == ["C^{xx}_t"] {
            flagged += 1;
        }
    }

    // θ₃ → 0 given bounded θ₂ and B^μ_0 ≥ 0, with boundedness judged far below the grid
    let grid = [0.1, 0.05, 0.025, 0.0125];
    let (mut bounded, mut bad) = (0, Vec::new());
    let mut fams = vec![CubicFamily::tilted(1.0)];
    for _ in 0..200 {
        let n = rng.gen_range(1..=2);
        let d = n + 1;
        let mut a0 = DMatrix::from_element(d, d, 1.0);
        let mut a1 = DMatrix::zeros(d, d);
        let degenerate = rng.gen_bool(0.5);
        for i in 1..d {
            for mu in 0..d {
                a0[(i, mu)] = if mu == 0 && degenerate { 0.0 } else { rng.gen_range(-2.0..2.0) };
                a1[(i, mu)] = rng.gen_range(-2.0..2.0);
            }
        }
        fams.push(CubicFamily::Affine { alpha: (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(), a0, a1 });
    }
    for fam in &fams {
        let dirs = sample_directions(fam.alpha().len(), 20);
        let (Some(hi), Some(lo)) = (theta_oracle(fam, 1e-3, &dirs), theta_oracle(fam, 1e-6, &dirs)) else { continue };
        let Ok(r) = theta_report(fam, &grid, &dirs) else { continue };
        let b0_ok = r.b0_nonnegative && hi.2 >= -1e-12 && lo.2 >= -1e-12;
        if lo.0 < 10.0 * hi.0.max(1e-12) && b0_ok {
            bounded += 1;
            // a vanishing θ₃ is O(β): three decades of β take off at least two
            let vanishes = lo.1 <= 1e-2 * hi.1.max(1e-9);
            if !vanishes || !r.theta3_vanishes || !r.implication_holds {
                bad.push(format!("{fam:?}"));
            }
        }
    }

    let lc = CubicFamily::lightcone(1.0);
    let r = theta_report(&lc, &grid, &sample_directions(1, 20)).unwrap();
    let theta2 = theta_functionals(&lc, &[1.0], &grid).unwrap();
    let lc_ok = !r.theta2_bounded && grid.iter().zip(&theta2.theta2).all(|(b, t)| (t - 1.0 / (2.0 * b)).abs() < 1e-12 / b);

    let pass = two_ok == 50 && flagged == 20 && bounded > 20 && bad.is_empty() && lc_ok;
    outcome(
        pass,
        format!(
            "two-group ok {two_ok}/50; C^{{xx}}_t flagged {flagged}/20; {bounded} bounded families, {} without vanishing theta3 {:?}; light-cone cubic divergent: {lc_ok} (growth {:.3})",
            bad.len(),
            bad.first(),
            r.theta2_growth
        ),
    )
}

/// Random value per lattice point, hashed from the integer coordinates.
fn hash_value(seed: u64, u: &[i64]) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &v in u {
        h = (h ^ v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn c10_chart_expansion() -> Outcome {
    let mut expansion = 0.0f64;
    let mut compared = 0;
    for n in [2usize, 3] {
        let a: Vec<f64> = (0..n).map(|i| 0.3 + 0.15 * i as f64).collect();
        let c = CoordinateChart::appendix_b(&a, 0.05).unwrap();
        let ops = c.difference_operators().strict();
        let w = LatticeWindow::new(&vec![-2; n + 1], &vec![2; n + 1], BoundaryPolicy::ShrinkingDomain).unwrap();
        for seed in 0..50u64 {
            let field = LatticeField::from_fn(&w, |u| hash_value(seed, u));
            let raw = lattice::lattice_differential(&field);
            let f = |t: f64, x: &[f64]| {
                let mut p = vec![t];
                p.extend_from_slice(x);
                hash_value(seed, &c.lattice_point(&p).expect("lattice image"))
            };
            for s in 0..w.n_sites() {
                if !raw.valid[s] {
                    continue;
                }
                let u: Vec<f64> = w.coords(s).iter().map(|v| *v as f64).collect();
                let p = c.to_physical(&u);
                let k = ops.decompose(&f, p[0], &p[1..]).unwrap();
                for mu in 0..=n {
                    let rebuilt = -c.b() * k.dt + (1..=n).map(|i| k.dx[i - 1] * a[i - 1] * c.amat()[(i, mu)]).sum::<f64>();
                    expansion = expansion.max((raw.at(s)[mu] - rebuilt).abs());
                    compared += 1;
                }
            }
        }
    }

    let mut speed = 0.0f64;
    let mut signs_ok = true;
    for n in [1usize, 2, 3] {
        let a: Vec<f64> = (0..n).map(|i| 0.25 * (i + 1) as f64).collect();
        let c = CoordinateChart::appendix_b(&a, 0.125).unwrap();
        let origin = c.to_physical(&vec![0.0; n + 1]);
        for mu in 0..=n {
            let mut e = vec![0.0; n + 1];
            e[mu] = 1.0;
            let x1 = c.to_physical(&e);
            // one lattice step along μ per time b
            let vel: Vec<f64> = (0..n).map(|i| (x1[i + 1] - origin[i + 1]) / c.b()).collect();
            signs_ok &= (0..n).all(|i| ((vel[i].abs() - a[i] / c.b()).abs()) < 1e-12);
            let r: Vec<f64> = (1..=n).map(|i| a[i - 1] / c.b() * c.amat()[(i, mu)]).collect();
            let ev = Evolver::new(&c, &DriftSpec::Constant(r), &Serial).unwrap();
            let mut s = Slice::delta(&vec![0; n], 0);
            for k in 1..=16 {
                s = ev.step_distribution(&s, 0.0, None).unwrap().0;
                let row = ev.moments(&s);
                signs_ok &= s.n_sites() == 1;
                for i in 0..n {
                    speed = speed.max((row.mean[i] - vel[i] * k as f64 * c.b()).abs());
                }
            }
        }
    }
    outcome(
        expansion < 1e-12 && compared > 0 && speed < 1e-12 && signs_ok,
        format!("{compared} edge differences for N = 2, 3, worst {expansion:.1e}; flows stay point masses at +-a_i/b: {signs_ok}, worst position error {speed:.1e}"),
    )
}

fn c11_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_phaselattice");
    let run = |jobs: &str| {
        let o = Command::new(bin).args(["simulate", "--jobs", jobs, "--set", "scenario=kramers", "--set", "horizon=0.5"]).output().expect("spawn");
        assert!(o.status.success(), "exit {:?}: {}", o.status, String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let outs = [run("1"), run("4"), run("1"), run("4")];
    let same = outs.iter().all(|o| *o == outs[0]);
    let rows = outs[0].iter().filter(|b| **b == b'\n').count();
    outcome(same && rows > 100, format!("kramers simulate, jobs 1/4/1/4: {} bytes, {rows} lines, identical: {same}", outs[0].len()))
}

use phaselattice::charts::*;
use phaselattice::dynamics::*;
use phaselattice::evolve::*;
use phaselattice::lattice::{BoundaryPolicy, LatticeWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_gauge() -> KramersGauge {
    KramersGauge { kappa: 0.0, lambda: 1.0, mu: 0.0, kappa_p: 1.0, lambda_p: 0.0, mu_p: -1.0 }
}

#[test]
fn two_families() {
    let fams = kramers_gauge_solve();
    assert_eq!(fams.len(), 2);
    assert!(fams.iter().all(|f| f.gauge_dim == 4));
    assert_eq!(fams[0].case, KramersCase::Liouville);
    assert_eq!(fams[1].case, KramersCase::Kramers);
    assert!(fams[1].constraint.contains("kappa' mu' < 0"));

    let g = sample_gauge();
    let p = g.probabilities().unwrap();
    assert_eq!(p, [0.5, 0.0, 0.5]);
    let eta = g.eta(0.3, 1.7).unwrap();
    assert!((eta[(1, 1)] - 1.7).abs() < 1e-15);
    assert_eq!(eta[(0, 0)], 0.0);
    assert_eq!(eta[(0, 1)], 0.0);
    assert_eq!(classify_gauge(&g), Some((KramersCase::Kramers, [0, 1, 2])));
    assert_eq!(fams[1].eta22_over_h(&g), 1.0);
}

#[test]
fn case_two_members_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let fam = &kramers_gauge_solve()[1];
    for _ in 0..500 {
        let kp = rng.gen_range(0.1..3.0);
        let mp = -rng.gen_range(0.1..3.0);
        let (k, m) = if rng.gen_bool(0.5) { (kp, mp) } else { (mp, kp) };
        let g = fam.sample([rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, k, rng.gen_range(-2.0..2.0), m]);
        let p = g.probabilities().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!(p[1].abs() < 1e-15);
        assert!((p[0] - m / (m - k)).abs() < 1e-12 && (p[2] - k / (k - m)).abs() < 1e-12);
        let h22 = rng.gen_range(0.1..2.0);
        let eta = g.eta(1.0, h22).unwrap();
        assert!(eta[(0, 0)].abs() < 1e-12);
        assert!((eta[(1, 1)] + h22 * k * m).abs() < 1e-12);
    }
}

#[test]
fn liouville_members_have_no_diffusion() {
    let fam = &kramers_gauge_solve()[0];
    let g = fam.sample([1.0, 0.5, -0.3, 2.0]);
    assert_eq!(g.probabilities().unwrap(), [1.0, 0.0, 0.0]);
    assert!(g.eta(1.0, 1.0).unwrap().iter().all(|v| v.abs() < 1e-15));
    assert_eq!(classify_gauge(&g).map(|c| c.0), Some(KramersCase::Liouville));
}

/// Brute force over sparsity patterns: among valid gauges, deterministic
/// position in the limit happens exactly for members of the two families.
#[test]
fn families_cover_every_deterministic_gauge() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut hits = [0usize; 2];
    for pattern in 0u32..64 {
        for _ in 0..40 {
            let mut e = [0.0f64; 6];
            for (k, v) in e.iter_mut().enumerate() {
                if pattern >> k & 1 == 1 {
                    *v = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0][rng.gen_range(0..6)];
                }
            }
            let g = KramersGauge { kappa: e[0], lambda: e[1], mu: e[2], kappa_p: e[3], lambda_p: e[4], mu_p: e[5] };
            let Ok(p) = g.probabilities() else { continue };
            if p.iter().any(|v| *v < -1e-12) {
                continue;
            }
            let x = [g.kappa, g.lambda, g.mu];
            let eta11: f64 = (0..3).map(|k| x[k] * x[k] * p[k]).sum();
            let deterministic = eta11.abs() < 1e-12;
            let class = classify_gauge(&g);
            assert_eq!(deterministic, class.is_some(), "{g:?} p={p:?}");
            if let Some((case, perm)) = class {
                hits[case as usize] += 1;
                let pp = g.permuted(perm).probabilities().unwrap();
                match case {
                    KramersCase::Liouville => assert!((pp[0] - 1.0).abs() < 1e-12),
                    KramersCase::Kramers => assert!(pp[1].abs() < 1e-12 && pp[0] > 0.0 && pp[2] > 0.0),
                }
            }
        }
    }
    assert!(hits[0] > 0 && hits[1] > 0, "{hits:?}");
}

#[test]
fn kramers_probabilities_recover_the_drift() {
    let fam = KramersFamily { h_x: 0.04, h22: 1.0, margin: 7.0, lambda_prime: 0.0, compensate: true };
    let chart = fam.chart_at(0.05).unwrap();
    let spec = DriftSpec::kramers(0.5, &[0.0, -1.0]);
    let w = LatticeWindow::new(&[0, -4, -4], &[3, 4, 4], BoundaryPolicy::ShrinkingDomain).unwrap();
    let x = probabilities_from_drift(&spec, &chart, &w).unwrap();
    let r = drift_from_probabilities(&x, &chart).unwrap();
    for s in 0..w.n_sites() {
        let u: Vec<f64> = w.coords(s).iter().map(|k| *k as f64).collect();
        let pos = chart.to_physical(&u);
        let (px, py) = (pos[1], pos[2]);
        assert!((r[2 * s] - py).abs() < 1e-12);
        assert!((r[2 * s + 1] - (-px - 0.5 * py)).abs() < 1e-12);
    }
    let d = describe_family(&fam, &spec).unwrap();
    assert_eq!(d.tag, Some(EquationTag::Kramers));
    assert_eq!(fam.p_hat().unwrap(), [0.5, 0.0, 0.5]);
}

#[test]
fn coarse_phase_space_run_tracks_the_moment_equations() {
    let fam = KramersFamily { h_x: 0.04, h22: 1.0, margin: 7.0, lambda_prime: 0.0, compensate: true };
    let setup = ConvergeSetup {
        analytic: Analytic::KramersMoments { beta: 0.5, c0: 0.0, c1: -1.0, h22: 1.0, x0: 1.0, y0: 0.0 },
        horizon: 1.0,
        domain: Some(Domain { lo: vec![-6.0, -7.0], hi: vec![7.0, 7.0] }),
        trim_tol: 1e-14,
    };
    let pt = converge_point(&fam, &setup, 0.025, &Serial).unwrap();
    let row = pt.lattice.unwrap();
    let (mean, _) = pt.reference.unwrap();
    // tail sites under the trim threshold are dropped
    assert!((row.mass - 1.0).abs() < 1e-7, "{}", row.mass);
    for i in 0..2 {
        assert!((row.mean[i] - mean[i]).abs() < 2e-3, "{:?} vs {mean:?}", row.mean);
    }
    assert!(pt.error < 0.25, "{}", pt.error);
}

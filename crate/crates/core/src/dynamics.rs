//! Transition probabilities from drift prescriptions, continuum coefficients
//! and the phase-space gauge analysis.
//!
//! Given a chart, the probabilities at a physical point solve
//! `A P = (1, b R^1 / a_1, ..., b R^N / a_N)`, so the mean step of every
//! coordinate is exactly `b R^i` and `Σ_μ P^μ = 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::charts::{invert, CoordinateChart, ScalingFamily};
use crate::error::{check_dim, Error, Result};
use crate::lattice::{self, is_distribution, LatticeOneForm, LatticeWindow, ProbabilityVectorField};
use crate::TOL;

/// Drift `R^i(x)` of the generator of motion. Drifts do not depend on time.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    /// `R = 0` in `n` dimensions.
    Free(usize),
    Constant(Vec<f64>),
    /// `R = r0 + J x`, with `J` row-major.
    Linear { r0: Vec<f64>, jac: Vec<f64> },
    /// Phase space `(x, y)`: `R_x = y`, `R_y = F(x) - β y` with `F(x) = Σ_k force[k] x^k`.
    Kramers { beta: f64, force: Vec<f64> },
}

impl DriftSpec {
    /// Constant drift `-2 γ h` of a particle under a constant force.
    pub fn constant_force(gamma: f64, h: f64) -> Self {
        DriftSpec::Constant(vec![-2.0 * gamma * h])
    }

    /// `R(x) = -2 β x`.
    pub fn ou(beta: f64) -> Self {
        DriftSpec::Linear { r0: vec![0.0], jac: vec![-2.0 * beta] }
    }

    pub fn kramers(beta: f64, force: &[f64]) -> Self {
        DriftSpec::Kramers { beta, force: force.to_vec() }
    }

    pub fn n(&self) -> usize {
        match self {
            DriftSpec::Free(n) => *n,
            DriftSpec::Constant(r) => r.len(),
            DriftSpec::Linear { r0, .. } => r0.len(),
            DriftSpec::Kramers { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DriftSpec::Linear { r0, jac } => check_dim(r0.len() * r0.len(), jac.len()),
            DriftSpec::Kramers { beta, .. } if !beta.is_finite() => Err(Error::Invalid("friction must be finite".into())),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftSpec::Free(_) => out.iter_mut().for_each(|v| *v = 0.0),
            DriftSpec::Constant(r) => out.copy_from_slice(r),
            DriftSpec::Linear { r0, jac } => {
                let n = r0.len();
                for i in 0..n {
                    out[i] = r0[i] + (0..n).map(|j| jac[i * n + j] * x[j]).sum::<f64>();
                }
            }
            DriftSpec::Kramers { beta, force } => {
                out[0] = x[1];
                out[1] = poly(force, x[0]) - beta * x[1];
            }
        }
    }

    /// Affine drifts give affine probabilities, so box corners decide admissibility.
    pub fn is_affine(&self) -> bool {
        match self {
            DriftSpec::Kramers { force, .. } => force.len() <= 2,
            _ => true,
        }
    }

    /// `(r0, J)` of an affine drift.
    pub fn affine_parts(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n();
        match self {
            DriftSpec::Free(_) => Some((vec![0.0; n], vec![0.0; n * n])),
            DriftSpec::Constant(r) => Some((r.clone(), vec![0.0; n * n])),
            DriftSpec::Linear { r0, jac } => Some((r0.clone(), jac.clone())),
            DriftSpec::Kramers { beta, force } if force.len() <= 2 => {
                let c0 = force.first().copied().unwrap_or(0.0);
                let c1 = force.get(1).copied().unwrap_or(0.0);
                Some((vec![0.0, c0], vec![0.0, 1.0, c1, -beta]))
            }
            _ => None,
        }
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

/// Chart plus drift: evaluates the transition probabilities at physical points.
#[derive(Debug, Clone)]
pub struct TransitionRule {
    pub chart: CoordinateChart,
    pub drift: DriftSpec,
    /// Row-major `B`, `(N+1) × (N+1)`.
    bflat: Vec<f64>,
    /// `b / a_m`.
    ratio: Vec<f64>,
}

impl TransitionRule {
    pub fn new(chart: &CoordinateChart, drift: &DriftSpec) -> Result<Self> {
        check_dim(chart.n(), drift.n())?;
        drift.validate()?;
        let d = chart.n() + 1;
        let bm = chart.bmat();
        let bflat = (0..d * d).map(|k| bm[(k / d, k % d)]).collect();
        let ratio = chart.a().iter().map(|a| chart.b() / a).collect();
        Ok(Self { chart: chart.clone(), drift: drift.clone(), bflat, ratio })
    }

    pub fn dim(&self) -> usize {
        self.chart.n() + 1
    }

    /// Writes `P^μ = B^μ_0 + Σ_m (b / a_m) B^μ_m R^m(x)` into `out`, settled; returns whether it is a distribution.
    pub fn probs_at(&self, x: &[f64], out: &mut [f64]) -> bool {
        self.probs_raw(x, out);
        settle(out)
    }

    /// `P^μ` before settling.
    pub fn probs_raw(&self, x: &[f64], out: &mut [f64]) {
        let n = self.chart.n();
        let d = n + 1;
        let mut r = [0.0f64; 16];
        let r = &mut r[..n];
        self.drift.eval(x, r);
        for mu in 0..d {
            let row = &self.bflat[mu * d..(mu + 1) * d];
            let mut p = row[0];
            for m in 0..n {
                p += row[m + 1] * self.ratio[m] * r[m];
            }
            out[mu] = p;
        }
    }

    /// For affine drifts, the change of every `P^μ` per unit displacement `dx`.
    pub fn affine_gradient(&self, dx: &[f64]) -> Option<Vec<f64>> {
        let (_, jac) = self.drift.affine_parts()?;
        let n = self.chart.n();
        let d = n + 1;
        let dr: Vec<f64> = (0..n).map(|i| (0..n).map(|j| jac[i * n + j] * dx[j]).sum()).collect();
        Some((0..d).map(|mu| (0..n).map(|m| self.bflat[mu * d + m + 1] * self.ratio[m] * dr[m]).sum()).collect())
    }

    /// Admissible interval on each spatial axis through the origin; NaN when the origin itself is invalid.
    pub fn admissible_bounds(&self) -> Vec<(f64, f64)> {
        let n = self.chart.n();
        let d = n + 1;
        let mut p = vec![0.0; d];
        let mut x = vec![0.0; n];
        let mut valid = |x: &[f64]| self.probs_at(x, &mut p);
        let mut out = Vec::with_capacity(n);
        if !valid(&x) {
            return vec![(f64::NAN, f64::NAN); n];
        }
        for i in 0..n {
            let mut ends = [0.0; 2];
            for (k, s) in [-1.0, 1.0].into_iter().enumerate() {
                let mut probe = |r: f64| {
                    x.iter_mut().for_each(|v| *v = 0.0);
                    x[i] = s * r;
                    valid(&x)
                };
                let mut hi = 1e-6f64;
                while hi < 1e15 && probe(hi) {
                    hi *= 2.0;
                }
                if hi >= 1e15 {
                    ends[k] = s * f64::INFINITY;
                    continue;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if probe(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                ends[k] = s * lo;
            }
            out.push((ends[0], ends[1]));
        }
        out
    }

    pub fn out_of_range(&self, x: &[f64]) -> Error {
        let mut p = vec![0.0; self.dim()];
        self.probs_at(x, &mut p);
        let direction = p.iter().position(|v| *v < -TOL || *v > 1.0 + TOL).unwrap_or(0);
        Error::ProbabilityOutOfRange { position: x.to_vec(), direction, value: p[direction], admissible: self.admissible_bounds() }
    }

    /// For affine drifts: checks that the probabilities are valid on the whole box `lo..=hi`.
    pub fn check_box(&self, lo: &[f64], hi: &[f64]) -> Result<()> {
        let n = self.chart.n();
        check_dim(n, lo.len())?;
        check_dim(n, hi.len())?;
        if !self.drift.is_affine() {
            return Err(Error::Unsupported("corner check needs an affine drift".into()));
        }
        let mut p = vec![0.0; n + 1];
        let mut x = vec![0.0; n];
        for mask in 0..(1usize << n) {
            for i in 0..n {
                x[i] = if mask >> i & 1 == 1 { hi[i] } else { lo[i] };
            }
            if !self.probs_at(&x, &mut p) {
                return Err(self.out_of_range(&x));
            }
        }
        Ok(())
    }

    /// Mean step `a_i (A P)^i / b` recovered from a probability vector.
    pub fn drift_of(&self, p: &[f64]) -> Vec<f64> {
        drift_of(&self.chart, p)
    }
}

/// Snaps entries within `TOL` of 0 or 1 and reports whether `p` is a distribution.
///
/// Rounding at the edge of the admissible region must not move mass.
#[inline]
pub fn settle(p: &mut [f64]) -> bool {
    let mut ok = true;
    for v in p.iter_mut() {
        ok &= *v >= -TOL && *v <= 1.0 + TOL;
        if v.abs() <= TOL {
            *v = 0.0;
        } else if (*v - 1.0).abs() <= TOL {
            *v = 1.0;
        }
    }
    ok
}

fn drift_of(chart: &CoordinateChart, p: &[f64]) -> Vec<f64> {
    let a = chart.amat();
    (1..=chart.n())
        .map(|i| chart.a()[i - 1] / chart.b() * (0..=chart.n()).map(|mu| a[(i, mu)] * p[mu]).sum::<f64>())
        .collect()
}

/// Probability field on a lattice window, evaluated at each site's physical position.
pub fn probabilities_from_drift(spec: &DriftSpec, chart: &CoordinateChart, window: &LatticeWindow) -> Result<ProbabilityVectorField> {
    let rule = TransitionRule::new(chart, spec)?;
    let d = rule.dim();
    check_dim(d, window.dim())?;
    let mut p = vec![0.0; window.n_sites() * d];
    for s in 0..window.n_sites() {
        let u: Vec<f64> = window.coords(s).iter().map(|&k| k as f64).collect();
        let x = &chart.to_physical(&u)[1..];
        if !rule.probs_at(x, &mut p[s * d..(s + 1) * d]) {
            return Err(rule.out_of_range(x));
        }
    }
    ProbabilityVectorField::new(window, p)
}

/// `R^i = (a_i / b)(A P)^i` at every site, site-major `n_sites × N`.
pub fn drift_from_probabilities(x: &ProbabilityVectorField, chart: &CoordinateChart) -> Result<Vec<f64>> {
    check_dim(chart.n() + 1, x.window.dim())?;
    let mut out = Vec::with_capacity(x.window.n_sites() * chart.n());
    for s in 0..x.window.n_sites() {
        out.extend(drift_of(chart, x.at(s)));
    }
    Ok(out)
}

/// Residuals of `⟨du^μ - P^μ ρ, X⟩ = 0` and `Σ_μ (du^μ - P^μ ρ) = 0`.
pub fn alpha_tilde_residuals(x: &ProbabilityVectorField) -> Result<(f64, f64)> {
    let w = &x.window;
    let d = w.dim();
    let n = w.n_sites();
    let r = lattice::rho(w);
    let mut pairing: f64 = 0.0;
    let mut sum = LatticeOneForm::constant(w, &vec![0.0; d])?;
    for mu in 0..d {
        let pmu: Vec<f64> = (0..n).map(|s| x.at(s)[mu]).collect();
        let alpha = LatticeOneForm::coordinate(w, mu).sub_scaled(&pmu, &r)?;
        pairing = pairing.max(lattice::contract(&alpha, x)?.max_abs());
        for (acc, v) in sum.comps.iter_mut().zip(&alpha.comps) {
            *acc += v;
        }
    }
    Ok((pairing, sum.comps.iter().fold(0.0, |m, v| m.max(v.abs()))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumCoefficients {
    pub r_hat: DriftSpec,
    /// From `Â`, `B̂` and `h`.
    pub eta_hat: DMatrix<f64>,
    pub p_hat: Vec<f64>,
    pub eps: Vec<f64>,
    pub eta_sequence: Vec<DMatrix<f64>>,
    /// Order-1 Richardson estimate from the two finest grid points.
    pub eta_extrapolated: DMatrix<f64>,
    /// Second moment of one step at the finest ε divided by `b`, mean product removed.
    pub eta_cross_check: DMatrix<f64>,
    pub discrepancy: f64,
    /// Smallest `C` with `|η(ε) - η̂| ≤ C ε` on the grid.
    pub fitted_c: f64,
    /// Drift recovered from the finest-ε probabilities at the sample point.
    pub drift_check: Vec<f64>,
}

fn richardson(e_coarse: &DMatrix<f64>, e_fine: &DMatrix<f64>, ratio: f64) -> DMatrix<f64> {
    (e_fine * ratio - e_coarse) / (ratio - 1.0)
}

/// Limits of the diffusion and drift along a decreasing `eps_grid`, checked two ways.
pub fn continuum_coefficients(
    family: &dyn ScalingFamily,
    spec: &DriftSpec,
    eps_grid: &[f64],
    sample: &[f64],
) -> Result<ContinuumCoefficients> {
    let n = family.n();
    check_dim(n, spec.n())?;
    check_dim(n, sample.len())?;
    if eps_grid.len() < 2 || eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Invalid("ε grid must be positive, strictly decreasing, with at least two points".into()));
    }
    let mut seq = Vec::with_capacity(eps_grid.len());
    for &e in eps_grid {
        seq.push(family.chart_at(e)?.eta());
    }
    let k = seq.len() - 1;
    let est = richardson(&seq[k - 1], &seq[k], eps_grid[k - 1] / eps_grid[k]);
    let prev = if k >= 2 { richardson(&seq[k - 2], &seq[k - 1], eps_grid[k - 2] / eps_grid[k - 1]) } else { seq[k].clone() };
    let scale = est.amax().max(prev.amax()).max(1e-300);
    let change = (&est - &prev).amax() / scale;
    if change > 1e-6 {
        return Err(Error::LimitNotFound { name: "η".into(), rel_change: change });
    }
    let eta_hat = family.eta_hat()?;
    let fitted_c = seq.iter().zip(eps_grid).map(|(e, eps)| (e - &eta_hat).amax() / eps).fold(0.0, f64::max);

    let chart = family.chart_at(eps_grid[k])?;
    let rule = TransitionRule::new(&chart, spec)?;
    let mut p = vec![0.0; n + 1];
    if !rule.probs_at(sample, &mut p) {
        return Err(rule.out_of_range(sample));
    }
    let mut r = vec![0.0; n];
    spec.eval(sample, &mut r);
    let steps: Vec<Vec<f64>> = (0..=n).map(|mu| chart.step(mu)).collect();
    let b = chart.b();
    let cross = DMatrix::from_fn(n, n, |i, j| {
        let second: f64 = (0..=n).map(|mu| p[mu] * steps[mu][i] * steps[mu][j]).sum();
        second / b - b * r[i] * r[j]
    });
    let discrepancy = (&cross - &eta_hat).amax();
    Ok(ContinuumCoefficients {
        r_hat: spec.clone(),
        eta_hat,
        p_hat: family.p_hat()?,
        eps: eps_grid.to_vec(),
        eta_sequence: seq,
        eta_extrapolated: est,
        eta_cross_check: cross,
        discrepancy,
        fitted_c,
        drift_check: rule.drift_of(&p),
    })
}

/// Largest `|η^{ij}|` over rows whose diagonal entry vanishes.
pub fn zero_diagonal_leak(eta: &DMatrix<f64>, tol: f64) -> f64 {
    let n = eta.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        if eta[(i, i)].abs() <= tol {
            for j in 0..n {
                m = m.max(eta[(i, j)].abs());
            }
        }
    }
    m
}

/// Entries of the 2D phase-space chart: rows `(1,1,1)`, `(κ,λ,μ)`, `(κ',λ',μ')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KramersGauge {
    pub kappa: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kappa_p: f64,
    pub lambda_p: f64,
    pub mu_p: f64,
}

impl KramersGauge {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, self.kappa, self.lambda, self.mu, self.kappa_p, self.lambda_p, self.mu_p])
    }

    pub fn det(&self) -> f64 {
        self.matrix().determinant()
    }

    /// `(p̂, q̂, r̂) = ((λμ' - λ'μ), (κ'μ - κμ'), (λ'κ - λκ')) / |A|`.
    pub fn probabilities(&self) -> Result<[f64; 3]> {
        let det = self.det();
        if det.abs() < 1e-14 {
            return Err(Error::Singular);
        }
        Ok([
            (self.lambda * self.mu_p - self.lambda_p * self.mu) / det,
            (self.kappa_p * self.mu - self.kappa * self.mu_p) / det,
            (self.lambda_p * self.kappa - self.lambda * self.kappa_p) / det,
        ])
    }

    /// `η̂^{ij} = sqrt(h_ii h_jj) Σ_μ Â^i_μ Â^j_μ B̂^μ_0`.
    pub fn eta(&self, h11: f64, h22: f64) -> Result<DMatrix<f64>> {
        let p = self.probabilities()?;
        let x = [self.kappa, self.lambda, self.mu];
        let y = [self.kappa_p, self.lambda_p, self.mu_p];
        let s = |u: &[f64; 3], v: &[f64; 3]| (0..3).map(|k| u[k] * v[k] * p[k]).sum::<f64>();
        let c = libm::sqrt(h11 * h22);
        Ok(DMatrix::from_row_slice(2, 2, &[h11 * s(&x, &x), c * s(&x, &y), c * s(&y, &x), h22 * s(&y, &y)]))
    }

    /// Same gauge with lattice coordinates reordered: new column `k` is old column `perm[k]`.
    pub fn permuted(&self, perm: [usize; 3]) -> KramersGauge {
        let x = [self.kappa, self.lambda, self.mu];
        let y = [self.kappa_p, self.lambda_p, self.mu_p];
        KramersGauge {
            kappa: x[perm[0]],
            lambda: x[perm[1]],
            mu: x[perm[2]],
            kappa_p: y[perm[0]],
            lambda_p: y[perm[1]],
            mu_p: y[perm[2]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KramersCase {
    /// `p̂ = 1`, `κ = κ' = 0`: deterministic phase-space trajectories.
    Liouville,
    /// `q̂ = 0`, `κ = μ = 0`, `κ' μ' < 0`.
    Kramers,
}

/// One solution family of `η̂^{11} = 0` with its free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFamily {
    pub case: KramersCase,
    pub parameters: [&'static str; 4],
    pub gauge_dim: usize,
    pub probabilities: &'static str,
    pub eta22: &'static str,
    pub constraint: &'static str,
}

impl GaugeFamily {
    /// Member of the family for the listed parameters.
    pub fn sample(&self, v: [f64; 4]) -> KramersGauge {
        match self.case {
            KramersCase::Liouville => KramersGauge { kappa: 0.0, lambda: v[0], mu: v[1], kappa_p: 0.0, lambda_p: v[2], mu_p: v[3] },
            KramersCase::Kramers => KramersGauge { kappa: 0.0, lambda: v[0], mu: 0.0, kappa_p: v[1], lambda_p: v[2], mu_p: v[3] },
        }
    }

    /// Membership in canonical coordinate order.
    pub fn contains(&self, g: &KramersGauge) -> bool {
        let z = |v: f64| v.abs() <= TOL;
        match self.case {
            KramersCase::Liouville => z(g.kappa) && z(g.kappa_p) && (g.lambda * g.mu_p - g.lambda_p * g.mu).abs() > TOL,
            KramersCase::Kramers => {
                z(g.kappa) && z(g.mu) && g.kappa_p * g.mu_p < 0.0 && g.lambda.abs() > TOL
            }
        }
    }

    /// `η̂^{22}` of a member, in units of `h22`.
    pub fn eta22_over_h(&self, g: &KramersGauge) -> f64 {
        match self.case {
            KramersCase::Liouville => 0.0,
            KramersCase::Kramers => -g.kappa_p * g.mu_p,
        }
    }
}

/// All gauges with deterministic position in the limit, `η̂^{11} = 0`, up to
/// permutations of the lattice coordinates.
pub fn kramers_gauge_solve() -> Vec<GaugeFamily> {
    vec![
        GaugeFamily {
            case: KramersCase::Liouville,
            parameters: ["lambda", "mu", "lambda'", "mu'"],
            gauge_dim: 4,
            probabilities: "p = 1, q = 0, r = 0",
            eta22: "0",
            constraint: "kappa = kappa' = 0, lambda mu' - lambda' mu != 0",
        },
        GaugeFamily {
            case: KramersCase::Kramers,
            parameters: ["lambda", "kappa'", "lambda'", "mu'"],
            gauge_dim: 4,
            probabilities: "p = mu'/(mu' - kappa'), q = 0, r = kappa'/(kappa' - mu')",
            eta22: "-h22 kappa' mu'",
            constraint: "kappa = mu = 0, kappa' mu' < 0, lambda != 0",
        },
    ]
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Which family a gauge belongs to, and the permutation bringing it to canonical order.
pub fn classify_gauge(g: &KramersGauge) -> Option<(KramersCase, [usize; 3])> {
    let fams = kramers_gauge_solve();
    for perm in PERMS {
        let pg = g.permuted(perm);
        for f in &fams {
            if f.contains(&pg) {
                return Some((f.case, perm));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquationTag {
    Heat,
    SmoluchowskiConstantForce,
    OrnsteinUhlenbeck,
    LiouvilleWithFriction,
    Kramers,
}

impl EquationTag {
    pub fn label(&self) -> &'static str {
        match self {
            EquationTag::Heat => "heat",
            EquationTag::SmoluchowskiConstantForce => "Smoluchowski (constant force)",
            EquationTag::OrnsteinUhlenbeck => "Ornstein-Uhlenbeck",
            EquationTag::LiouvilleWithFriction => "Liouville with friction",
            EquationTag::Kramers => "Kramers",
        }
    }
}

/// `∂_t f - Σ R̂^i ∂_i f - ½ Σ η̂^{ij} ∂_i ∂_j f = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorDescriptor {
    pub drift: DriftSpec,
    pub diffusion: DMatrix<f64>,
    pub tag: Option<EquationTag>,
}

fn tiny(v: f64, scale: f64) -> bool {
    v.abs() <= 1e-9 * scale.max(1e-300)
}

pub fn limiting_generator(coeffs: &ContinuumCoefficients) -> GeneratorDescriptor {
    GeneratorDescriptor { drift: coeffs.r_hat.clone(), diffusion: coeffs.eta_hat.clone(), tag: tag_equation(&coeffs.r_hat, &coeffs.eta_hat) }
}

pub fn tag_equation(drift: &DriftSpec, eta: &DMatrix<f64>) -> Option<EquationTag> {
    let n = drift.n();
    if eta.nrows() != n {
        return None;
    }
    let scale = eta.amax().max(1.0);
    let (r0, jac) = drift.affine_parts()?;
    let zero_drift = r0.iter().chain(&jac).all(|v| *v == 0.0);
    let eta_zero = eta.iter().all(|v| tiny(*v, scale));
    if zero_drift {
        return if eta_zero { None } else { Some(EquationTag::Heat) };
    }
    if n == 1 && !eta_zero && eta[(0, 0)] > 0.0 {
        if jac[0] == 0.0 {
            return Some(EquationTag::SmoluchowskiConstantForce);
        }
        if r0[0] == 0.0 && jac[0] < 0.0 {
            return Some(EquationTag::OrnsteinUhlenbeck);
        }
        return None;
    }
    if n == 2 && r0[0] == 0.0 && jac[0] == 0.0 && jac[1] == 1.0 {
        if eta_zero {
            return Some(EquationTag::LiouvilleWithFriction);
        }
        if tiny(eta[(0, 0)], scale) && tiny(eta[(0, 1)], scale) && tiny(eta[(1, 0)], scale) && eta[(1, 1)] > 0.0 {
            return Some(EquationTag::Kramers);
        }
    }
    None
}

/// Describes a family's limiting equation without a grid.
pub fn describe_family(family: &dyn ScalingFamily, spec: &DriftSpec) -> Result<GeneratorDescriptor> {
    check_dim(family.n(), spec.n())?;
    let eta = family.eta_hat()?;
    let p = family.p_hat()?;
    if !is_distribution(&p) {
        return Err(Error::Invalid(format!("limiting probabilities {p:?} are not a distribution")));
    }
    invert(&family.hat_a())?;
    Ok(GeneratorDescriptor { tag: tag_equation(spec, &eta), drift: spec.clone(), diffusion: eta })
}

/// Human-readable form of a family, for reports.
pub fn family_summary(f: &GaugeFamily) -> String {
    format!(
        "{:?}: parameters ({}) [dimension {}]; {}; eta22 = {}; constraint: {}",
        f.case,
        f.parameters.join(", "),
        f.gauge_dim,
        f.probabilities,
        f.eta22,
        f.constraint
    )
}

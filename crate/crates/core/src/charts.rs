//! Constant-coefficient linear charts between lattice coordinates `u^μ` and
//! physical coordinates `(t, x^1, ..., x^N)`.
//!
//! A chart is `x^μ = a_μ Σ_ν A^μ_ν u^ν` with `a_0 = -b` and the first row of
//! `A` all ones, so every lattice step lowers `t` by `b`. `B = A⁻¹`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::lattice::{is_distribution, ProbabilityVectorField};
use crate::TOL;

/// Relative slack when snapping a physical point back to integer lattice coordinates.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateChart {
    n: usize,
    b: f64,
    a: Vec<f64>,
    amat: DMatrix<f64>,
    bmat: DMatrix<f64>,
}

pub(crate) fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m.clone().try_inverse().ok_or(Error::Singular)?;
    let n = m.nrows();
    let prod = m * &inv;
    let scale = m.amax().max(1.0) * inv.amax().max(1.0);
    if (prod - DMatrix::identity(n, n)).amax() > 1e-12 * scale {
        return Err(Error::Singular);
    }
    Ok(inv)
}

impl CoordinateChart {
    /// `a` holds the spatial scalings `a_1..a_N`; `amat` is `(N+1) × (N+1)`.
    pub fn new(a: &[f64], b: f64, amat: DMatrix<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Invalid("a chart needs at least one spatial axis".into()));
        }
        check_dim(n + 1, amat.nrows())?;
        check_dim(n + 1, amat.ncols())?;
        if !(b > 0.0) || a.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Invalid("scalings a_i and b must be positive".into()));
        }
        if (0..=n).any(|mu| amat[(0, mu)] != 1.0) {
            return Err(Error::Invalid("first row of A must be all ones".into()));
        }
        let bmat = invert(&amat)?;
        Ok(Self { n, b, a: a.to_vec(), amat, bmat })
    }

    /// `t = -b(u + v)`, `x = a(u - v)`.
    pub fn lightcone_1d(a: f64, b: f64) -> Result<Self> {
        Self::new(&[a], b, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]))
    }

    /// `x^i = a_i (Σ_{μ≠i} u^μ - u^i)`.
    pub fn appendix_b(a: &[f64], b: f64) -> Result<Self> {
        let n = a.len();
        let mut m = DMatrix::from_element(n + 1, n + 1, 1.0);
        for i in 1..=n {
            m[(i, i)] = -1.0;
        }
        Self::new(a, b, m)
    }

    /// `x^i = a_i ((N+1) u^i - Σ_μ u^μ)`: the symmetric walk on a simplex of directions.
    pub fn simplex(a: &[f64], b: f64) -> Result<Self> {
        let n = a.len();
        let mut m = DMatrix::from_element(n + 1, n + 1, 0.0);
        for mu in 0..=n {
            m[(0, mu)] = 1.0;
        }
        for i in 1..=n {
            for mu in 0..=n {
                m[(i, mu)] = if i == mu { n as f64 } else { -1.0 };
            }
        }
        Self::new(a, b, m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn amat(&self) -> &DMatrix<f64> {
        &self.amat
    }

    pub fn bmat(&self) -> &DMatrix<f64> {
        &self.bmat
    }

    /// `a_μ` with `a_0 = -b`.
    pub fn scale(&self, mu: usize) -> f64 {
        if mu == 0 {
            -self.b
        } else {
            self.a[mu - 1]
        }
    }

    /// Column `B^μ_0`, the drift-free probabilities.
    pub fn b0(&self) -> Vec<f64> {
        (0..=self.n).map(|mu| self.bmat[(mu, 0)]).collect()
    }

    /// `a_i a_j / b`.
    pub fn h(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i] * self.a[j] / self.b)
    }

    /// Spatial displacement of one step along lattice direction `mu`.
    pub fn step(&self, mu: usize) -> Vec<f64> {
        (1..=self.n).map(|i| self.a[i - 1] * self.amat[(i, mu)]).collect()
    }

    pub fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        (0..=self.n).map(|mu| self.scale(mu) * (0..=self.n).map(|nu| self.amat[(mu, nu)] * u[nu]).sum::<f64>()).collect()
    }

    pub fn to_lattice(&self, x: &[f64]) -> Vec<f64> {
        (0..=self.n)
            .map(|nu| (0..=self.n).map(|mu| self.bmat[(nu, mu)] * x[mu] / self.scale(mu)).sum())
            .collect()
    }

    /// Integer lattice coordinates of `(t, x)`, or an error when it is not an image point.
    pub fn lattice_point(&self, x: &[f64]) -> Result<Vec<i64>> {
        check_dim(self.n + 1, x.len())?;
        let u = self.to_lattice(x);
        let mut out = Vec::with_capacity(u.len());
        for v in u {
            let r = libm::round(v);
            if (v - r).abs() > SNAP_TOL * v.abs().max(1.0) {
                return Err(Error::OffLattice { position: x.to_vec() });
            }
            out.push(r as i64);
        }
        Ok(out)
    }

    /// `C'^{μν}_ρ = Σ_λ A^μ_λ A^ν_λ B^λ_ρ`, indexed `[(μ * d + ν) * d + ρ]`.
    pub fn normalized_structure_constants(&self) -> Vec<f64> {
        let d = self.n + 1;
        let mut c = vec![0.0; d * d * d];
        for mu in 0..d {
            for nu in 0..d {
                for rho in 0..d {
                    c[(mu * d + nu) * d + rho] =
                        (0..d).map(|l| self.amat[(mu, l)] * self.amat[(nu, l)] * self.bmat[(l, rho)]).sum();
                }
            }
        }
        c
    }

    pub fn commutation_relations(&self) -> CommutationTable {
        let d = self.n + 1;
        let cn = self.normalized_structure_constants();
        let mut c = vec![0.0; d * d * d];
        for mu in 0..d {
            for nu in 0..d {
                for rho in 0..d {
                    let k = (mu * d + nu) * d + rho;
                    c[k] = self.scale(mu) * self.scale(nu) / self.scale(rho) * cn[k];
                }
            }
        }
        CommutationTable { dim: d, c }
    }

    /// `η^{ij} = (a_i a_j / b) Σ_μ A^i_μ A^j_μ B^μ_0`.
    pub fn eta(&self) -> DMatrix<f64> {
        let b0 = self.b0();
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let s: f64 = (0..=self.n).map(|mu| self.amat[(i + 1, mu)] * self.amat[(j + 1, mu)] * b0[mu]).sum();
            self.a[i] * self.a[j] / self.b * s
        })
    }

    /// `H = A ℙ Aᵀ` for a single probability vector.
    pub fn transported_correlation(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.n + 1, p.len())?;
        let d = self.n + 1;
        let pm = DMatrix::from_fn(d, d, |m, k| if m == k { p[m] } else { 0.0 } - p[m] * p[k]);
        Ok(&self.amat * pm * self.amat.transpose())
    }

    pub fn difference_operators(&self) -> DifferenceOperators<'_> {
        DifferenceOperators { chart: self, strict: false }
    }
}

/// Coefficients of `dx^μ • dx^ν = Σ_ρ c^{μν}_ρ dx^ρ` with `dx^0 = dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationTable {
    pub dim: usize,
    pub c: Vec<f64>,
}

impl CommutationTable {
    pub fn get(&self, mu: usize, nu: usize, rho: usize) -> f64 {
        self.c[(mu * self.dim + nu) * self.dim + rho]
    }
}

/// Chart difference operators acting on a function of `(t, x)`.
///
/// In strict mode every sample point must be a lattice image.
pub struct DifferenceOperators<'c> {
    chart: &'c CoordinateChart,
    strict: bool,
}

/// `df = c_t dt + Σ_i c_i dx^i` at one lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct FormCoefficients {
    pub dt: f64,
    pub dx: Vec<f64>,
}

impl<'c> DifferenceOperators<'c> {
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    fn sample(&self, f: &dyn Fn(f64, &[f64]) -> f64, t: f64, x: &[f64]) -> Result<f64> {
        if self.strict {
            let mut p = Vec::with_capacity(x.len() + 1);
            p.push(t);
            p.extend_from_slice(x);
            self.chart.lattice_point(&p)?;
        }
        Ok(f(t, x))
    }

    fn shifted(&self, x: &[f64], mu: usize) -> Vec<f64> {
        let s = self.chart.step(mu);
        x.iter().zip(s).map(|(a, b)| a + b).collect()
    }

    /// `∂̄_i f(t, x) = (1/a_i) Σ_μ f(t, x + a A_μ) B^μ_i`, with `i` in `1..=N`.
    pub fn bar_partial(&self, f: &dyn Fn(f64, &[f64]) -> f64, i: usize, t: f64, x: &[f64]) -> Result<f64> {
        let c = self.chart;
        check_dim(c.n, x.len())?;
        let mut acc = 0.0;
        for mu in 0..=c.n {
            acc += self.sample(f, t, &self.shifted(x, mu))? * c.bmat[(mu, i)];
        }
        Ok(acc / c.a[i - 1])
    }

    /// `Δf(t, x) = (2/b)(Σ_μ f(t, x + a A_μ) B^μ_0 - f(t, x))`.
    pub fn delta(&self, f: &dyn Fn(f64, &[f64]) -> f64, t: f64, x: &[f64]) -> Result<f64> {
        let c = self.chart;
        check_dim(c.n, x.len())?;
        let mut acc = 0.0;
        for mu in 0..=c.n {
            acc += self.sample(f, t, &self.shifted(x, mu))? * c.bmat[(mu, 0)];
        }
        Ok(2.0 / c.b * (acc - self.sample(f, t, x)?))
    }

    /// `∂_{-t} f(t, x) = (f(t, x) - f(t - b, x)) / b`.
    pub fn partial_minus_t(&self, f: &dyn Fn(f64, &[f64]) -> f64, t: f64, x: &[f64]) -> Result<f64> {
        let b = self.chart.b;
        Ok((self.sample(f, t, x)? - self.sample(f, t - b, x)?) / b)
    }

    /// `df = (∂_{-t} f - ½ Δf(t - b, ·)) dt + Σ ∂̄_i f(t - b, ·) dx^i` at the point `(t, x)`.
    ///
    /// In strict mode the off-lattice value `f(t - b, x)` is never requested;
    /// it cancels between the two terms of the `dt` coefficient.
    pub fn decompose(&self, f: &dyn Fn(f64, &[f64]) -> f64, t: f64, x: &[f64]) -> Result<FormCoefficients> {
        let c = self.chart;
        let tb = t - c.b;
        let dt = if self.strict {
            let mut acc = 0.0;
            for mu in 0..=c.n {
                acc += self.sample(f, tb, &self.shifted(x, mu))? * c.bmat[(mu, 0)];
            }
            (self.sample(f, t, x)? - acc) / c.b
        } else {
            self.partial_minus_t(f, t, x)? - 0.5 * self.delta(f, tb, x)?
        };
        let dx = (1..=c.n).map(|i| self.bar_partial(f, i, tb, x)).collect::<Result<Vec<_>>>()?;
        Ok(FormCoefficients { dt, dx })
    }
}

/// Linear map of physical coordinates that leaves `t` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartTransform {
    pub lambda: DMatrix<f64>,
}

impl ChartTransform {
    pub fn new(lambda: DMatrix<f64>) -> Result<Self> {
        let d = lambda.nrows();
        check_dim(d, lambda.ncols())?;
        if lambda[(0, 0)] != 1.0 || (1..d).any(|j| lambda[(0, j)] != 0.0) {
            return Err(Error::Invalid("first row of Λ must be (1, 0, ..., 0)".into()));
        }
        invert(&lambda)?;
        Ok(Self { lambda })
    }

    pub fn identity(d: usize) -> Self {
        Self { lambda: DMatrix::identity(d, d) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &ChartTransform) -> ChartTransform {
        ChartTransform { lambda: &self.lambda * &other.lambda }
    }
}

/// New chart with physical coordinates `x' = Λ x`, keeping the scalings `a_i`.
pub fn apply_transform(l: &ChartTransform, chart: &CoordinateChart) -> Result<CoordinateChart> {
    let d = chart.n + 1;
    check_dim(d, l.lambda.nrows())?;
    let mut m = DMatrix::zeros(d, d);
    for mu in 0..d {
        for lam in 0..d {
            let s: f64 = (0..d).map(|nu| l.lambda[(mu, nu)] * chart.scale(nu) * chart.amat[(nu, lam)]).sum();
            m[(mu, lam)] = s / chart.scale(mu);
        }
    }
    for lam in 0..d {
        m[(0, lam)] = 1.0;
    }
    CoordinateChart::new(&chart.a, chart.b, m)
}

/// Rotation making a symmetric spatial covariance block diagonal.
///
/// Eigenvalues come out in descending order; an already diagonal block gives the identity.
pub fn diagonalizing_gauge_for(block: &DMatrix<f64>) -> Result<(ChartTransform, Vec<f64>)> {
    let n = block.nrows();
    check_dim(n, block.ncols())?;
    let d = n + 1;
    let off = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(block[(i, j)].abs()));
    if off <= 1e-14 * block.amax().max(1e-300) {
        let diag = (0..n).map(|i| block[(i, i)]).collect();
        return Ok((ChartTransform::identity(d), diag));
    }
    let eig = SymmetricEigen::new(block.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].partial_cmp(&eig.eigenvalues[p]).unwrap_or(core::cmp::Ordering::Equal));
    let mut lambda = DMatrix::zeros(d, d);
    lambda[(0, 0)] = 1.0;
    let mut values = Vec::with_capacity(n);
    for (row, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let lead = (0..n).find(|&i| v[i].abs() > 1e-12).unwrap_or(0);
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            lambda[(row + 1, i + 1)] = sign * v[i];
        }
        values.push(eig.eigenvalues[k]);
    }
    Ok((ChartTransform::new(lambda)?, values))
}

/// Physical step covariance `a_i a_j (A ℙ Aᵀ)^{ij}` for a single probability vector.
pub fn step_covariance(chart: &CoordinateChart, p: &[f64]) -> Result<DMatrix<f64>> {
    let h = chart.transported_correlation(p)?;
    let n = chart.n;
    Ok(DMatrix::from_fn(n, n, |i, j| chart.a[i] * chart.a[j] * h[(i + 1, j + 1)]))
}

/// Gauge transform diagonalizing the physical step covariance of a spatially constant field.
pub fn diagonalizing_gauge(chart: &CoordinateChart, x: &ProbabilityVectorField) -> Result<ChartTransform> {
    let d = chart.n + 1;
    check_dim(d, x.window.dim())?;
    let p0 = x.at(0).to_vec();
    for s in 1..x.window.n_sites() {
        if x.at(s).iter().zip(&p0).any(|(a, b)| (a - b).abs() > TOL) {
            return Err(Error::Unsupported("correlation matrix varies across the window".into()));
        }
    }
    Ok(diagonalizing_gauge_for(&step_covariance(chart, &p0)?)?.0)
}

/// A chart for every scale `ε ∈ (0, 1]`, with declared limits.
pub trait ScalingFamily: Send + Sync {
    fn n(&self) -> usize;
    fn chart_at(&self, eps: f64) -> Result<CoordinateChart>;
    /// `Â = lim A(ε)`.
    fn hat_a(&self) -> DMatrix<f64>;
    /// `h_ij = lim a_i a_j / b`.
    fn h(&self) -> DMatrix<f64>;
    fn name(&self) -> String;

    fn hat_b(&self) -> Result<DMatrix<f64>> {
        invert(&self.hat_a())
    }

    /// `η̂^{ij} = h_ij Σ_μ Â^i_μ Â^j_μ B̂^μ_0`.
    fn eta_hat(&self) -> Result<DMatrix<f64>> {
        let a = self.hat_a();
        let b = self.hat_b()?;
        let h = self.h();
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |i, j| h[(i, j)] * (0..=n).map(|mu| a[(i + 1, mu)] * a[(j + 1, mu)] * b[(mu, 0)]).sum::<f64>()))
    }

    /// `P̂^μ = B̂^μ_0`.
    fn p_hat(&self) -> Result<Vec<f64>> {
        let b = self.hat_b()?;
        Ok((0..=self.n()).map(|mu| b[(mu, 0)]).collect())
    }
}

/// `a_i = sqrt(h_ii) ε`, `b = ε²`, fixed `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtFamily {
    pub h_diag: Vec<f64>,
    pub amat: DMatrix<f64>,
    pub label: String,
}

impl SqrtFamily {
    pub fn new(h_diag: &[f64], amat: DMatrix<f64>, label: &str) -> Result<Self> {
        if h_diag.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Invalid("diffusion scales h_ii must be positive".into()));
        }
        let f = Self { h_diag: h_diag.to_vec(), amat, label: label.into() };
        f.chart_at(1.0)?;
        Ok(f)
    }

    pub fn lightcone(h: f64) -> Result<Self> {
        Self::new(&[h], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), "lightcone")
    }

    pub fn appendix_b(h_diag: &[f64]) -> Result<Self> {
        let c = CoordinateChart::appendix_b(&vec![1.0; h_diag.len()], 1.0)?;
        Self::new(h_diag, c.amat.clone(), "appendix_b")
    }

    pub fn simplex(h_diag: &[f64]) -> Result<Self> {
        let c = CoordinateChart::simplex(&vec![1.0; h_diag.len()], 1.0)?;
        Self::new(h_diag, c.amat.clone(), "simplex")
    }
}

impl ScalingFamily for SqrtFamily {
    fn n(&self) -> usize {
        self.h_diag.len()
    }

    fn chart_at(&self, eps: f64) -> Result<CoordinateChart> {
        let a: Vec<f64> = self.h_diag.iter().map(|h| libm::sqrt(*h) * eps).collect();
        CoordinateChart::new(&a, eps * eps, self.amat.clone())
    }

    fn hat_a(&self) -> DMatrix<f64> {
        self.amat.clone()
    }

    fn h(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| libm::sqrt(self.h_diag[i] * self.h_diag[j]))
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Phase-space family for position `x` and velocity `y`.
///
/// Rows: `(1, 1, 1)`, `(-δ, 1, -δ)` and `(1, λ', -1)`, with `δ = Y b / a_x`
/// so that the position direction stays admissible for velocities `y ≥ -Y`.
/// `a_x = sqrt(h_x) ε`, `b = ε²`. With `compensate` the velocity scaling is
/// widened by `1 / sqrt(1 - q0)`, `q0` being the position-direction weight at
/// `y = 0`, which offsets the velocity diffusion lost to that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct KramersFamily {
    pub h_x: f64,
    pub h22: f64,
    pub margin: f64,
    pub lambda_prime: f64,
    pub compensate: bool,
}

impl KramersFamily {
    pub fn delta(&self, eps: f64) -> f64 {
        self.margin * eps / libm::sqrt(self.h_x)
    }
}

impl ScalingFamily for KramersFamily {
    fn n(&self) -> usize {
        2
    }

    fn chart_at(&self, eps: f64) -> Result<CoordinateChart> {
        let b = eps * eps;
        let ax = libm::sqrt(self.h_x) * eps;
        let d = self.delta(eps);
        let q0 = (b / ax) * self.margin / (1.0 + d);
        if q0 >= 1.0 {
            return Err(Error::Invalid(format!("velocity margin {} too wide for ε = {eps}", self.margin)));
        }
        let mut ay = libm::sqrt(self.h22) * eps;
        if self.compensate {
            ay /= libm::sqrt(1.0 - q0);
        }
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, -d, 1.0, -d, 1.0, self.lambda_prime, -1.0]);
        CoordinateChart::new(&[ax, ay], b, m)
    }

    fn hat_a(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, self.lambda_prime, -1.0])
    }

    fn h(&self) -> DMatrix<f64> {
        let c = libm::sqrt(self.h_x * self.h22);
        DMatrix::from_row_slice(2, 2, &[self.h_x, c, c, self.h22])
    }

    fn name(&self) -> String {
        "kramers".into()
    }
}

/// Limiting commutation table: only `dx^i • dx^j = -η̂^{ij} dt` survives.
pub fn limiting_commutation(family: &dyn ScalingFamily) -> Result<CommutationTable> {
    let n = family.n();
    let d = n + 1;
    let eta = family.eta_hat()?;
    let mut c = vec![0.0; d * d * d];
    for i in 0..n {
        for j in 0..n {
            c[((i + 1) * d + j + 1) * d] = -eta[(i, j)];
        }
    }
    Ok(CommutationTable { dim: d, c })
}

/// Warnings about the declared limits `a_i a_j / b → h_ij` and `a_i / b → ∞` along a grid.
pub fn family_diagnostics(family: &dyn ScalingFamily, eps_grid: &[f64]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let h = family.h();
    let Some(&finest) = eps_grid.last() else {
        return Ok(out);
    };
    let c = family.chart_at(finest)?;
    let hc = c.h();
    let n = family.n();
    for i in 0..n {
        for j in 0..n {
            let rel = (hc[(i, j)] - h[(i, j)]).abs() / h[(i, j)].abs().max(1e-300);
            if rel > 1e-2 {
                out.push(format!("a_{}a_{}/b = {} at ε = {finest}, declared limit {}", i + 1, j + 1, hc[(i, j)], h[(i, j)]));
            }
        }
        if eps_grid.len() >= 2 {
            let prev = family.chart_at(eps_grid[eps_grid.len() - 2])?;
            if c.a[i] / c.b <= prev.a[i] / prev.b {
                out.push(format!("a_{}/b does not grow along the grid", i + 1));
            }
        }
    }
    if !is_distribution(&family.p_hat()?) {
        out.push("limiting probabilities B̂^μ_0 are not a distribution".into());
    }
    Ok(out)
}

/// Family built from a closure, for charts not covered above.
pub struct CustomFamily {
    pub n: usize,
    pub hat_a: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub label: String,
    pub chart_at: Box<dyn Fn(f64) -> Result<CoordinateChart> + Send + Sync>,
}

impl ScalingFamily for CustomFamily {
    fn n(&self) -> usize {
        self.n
    }

    fn chart_at(&self, eps: f64) -> Result<CoordinateChart> {
        (self.chart_at)(eps)
    }

    fn hat_a(&self) -> DMatrix<f64> {
        self.hat_a.clone()
    }

    fn h(&self) -> DMatrix<f64> {
        self.h.clone()
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

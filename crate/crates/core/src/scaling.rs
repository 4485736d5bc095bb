//! Order bookkeeping for grouped scaling limits, and the θ₂/θ₃ tests for
//! cubic scaling of hypercubic charts.
//!
//! Coordinates `u^μ` are rescaled as `x^μ = s_μ u^μ` with `s_μ ~ ε^{k_μ}`.
//! A structure constant `C^{μν}_ρ` may itself vanish like `ε^{v}`. The
//! coefficient of `dx^ρ` in `dx^μ • dx^ν` then has order
//! `k_μ + k_ν - k_ρ + v`, and the `r`-th term of the expansion of `D_ρ f`
//! in physical derivatives has order `Σ k_{μ_i} - k_ρ + Σ v`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::charts::CoordinateChart;
use crate::error::{Error, Result};
use crate::TOL;

/// `du^μ • du^ν = Σ_ρ C^{μν}_ρ du^ρ` with constant coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    pub dim: usize,
    /// Indexed `[(μ * dim + ν) * dim + ρ]`.
    pub c: Vec<f64>,
    /// Vanishing exponent of each constant in the small parameter.
    pub order: Vec<i32>,
    /// Constants fixed by a chart cannot be tuned to satisfy a constraint.
    pub rigid: bool,
}

impl StructureConstants {
    pub fn new(dim: usize, c: Vec<f64>, rigid: bool) -> Result<Self> {
        crate::error::check_dim(dim * dim * dim, c.len())?;
        for mu in 0..dim {
            for nu in 0..mu {
                for rho in 0..dim {
                    let (x, y) = (c[(mu * dim + nu) * dim + rho], c[(nu * dim + mu) * dim + rho]);
                    if (x - y).abs() > 1e-9 * (1.0 + x.abs()) {
                        return Err(Error::Invalid(format!("C^{{{mu}{nu}}}_{rho} is not symmetric")));
                    }
                }
            }
        }
        Ok(Self { dim, c, order: vec![0; dim * dim * dim], rigid })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, c: vec![0.0; dim * dim * dim], order: vec![0; dim * dim * dim], rigid: false }
    }

    /// `C^{μν}_ρ = δ^{μν} δ^μ_ρ`: the oriented hypercubic lattice in lattice coordinates.
    pub fn hypercubic(dim: usize) -> Self {
        let mut s = Self::zero(dim);
        for mu in 0..dim {
            s.c[(mu * dim + mu) * dim + mu] = 1.0;
        }
        s.rigid = true;
        s
    }

    /// Constants of a chart in its rescaled coordinates.
    pub fn from_chart(chart: &CoordinateChart, rigid: bool) -> Self {
        let dim = chart.n() + 1;
        let c = chart.normalized_structure_constants();
        Self { dim, c, order: vec![0; dim * dim * dim], rigid }
    }

    pub fn get(&self, mu: usize, nu: usize, rho: usize) -> f64 {
        self.c[(mu * self.dim + nu) * self.dim + rho]
    }

    fn v(&self, mu: usize, nu: usize, rho: usize) -> i32 {
        self.order[(mu * self.dim + nu) * self.dim + rho]
    }

    /// Largest violation of `(du^μ • du^ν) • du^λ = du^μ • (du^ν • du^λ)`.
    pub fn associativity_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for mu in 0..d {
            for nu in 0..d {
                for la in 0..d {
                    for sg in 0..d {
                        let l: f64 = (0..d).map(|r| self.get(mu, nu, r) * self.get(r, la, sg)).sum();
                        let r: f64 = (0..d).map(|r| self.get(nu, la, r) * self.get(mu, r, sg)).sum();
                        worst = worst.max((l - r).abs());
                    }
                }
            }
        }
        worst
    }

    /// Imposes `C^{μν}_ρ = ε^k K^{μν}_ρ` for each listed constraint.
    pub fn with_constraints(&self, cons: &[Constraint]) -> Self {
        let mut s = self.clone();
        let d = self.dim;
        for c in cons {
            for (m, n) in [(c.mu, c.nu), (c.nu, c.mu)] {
                let k = (m * d + n) * d + c.rho;
                s.order[k] = s.order[k].max(c.exponent);
            }
        }
        s
    }

    /// `D_ρ f` through third order from the partial derivatives of `f` at a point.
    ///
    /// `grad[μ]`, `hess[μ d + ν]`, `third[(μ d + ν) d + λ]`.
    pub fn differential_expansion(&self, grad: &[f64], hess: &[f64], third: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|rho| {
                let mut s = grad[rho];
                for m1 in 0..d {
                    for m2 in 0..d {
                        s += 0.5 * self.get(m1, m2, rho) * hess[m1 * d + m2];
                        for m3 in 0..d {
                            let t: f64 = (0..d).map(|nu| self.get(m1, m2, nu) * self.get(m3, nu, rho)).sum();
                            s += t / 6.0 * third[(m1 * d + m2) * d + m3];
                        }
                    }
                }
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGroup {
    pub name: String,
    pub members: Vec<usize>,
    /// Scale of the group is `ε^exponent`.
    pub exponent: i32,
}

/// Partition of coordinate indices into groups that share a scale exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPartition {
    pub dim: usize,
    pub groups: Vec<ScaleGroup>,
    k: Vec<i32>,
}

impl ScalingPartition {
    /// The group holding index 0 is the time group and must carry the largest exponent.
    pub fn new(dim: usize, groups: Vec<ScaleGroup>) -> Result<Self> {
        let mut k = vec![None; dim];
        for g in &groups {
            if g.exponent < 1 {
                return Err(Error::Invalid(format!("group {} has exponent {} < 1", g.name, g.exponent)));
            }
            if g.members.is_empty() {
                return Err(Error::Invalid(format!("group {} is empty", g.name)));
            }
            for &m in &g.members {
                if m >= dim || k[m].is_some() {
                    return Err(Error::Invalid(format!("index {m} is out of range or in two groups")));
                }
                k[m] = Some(g.exponent);
            }
        }
        let k: Vec<i32> = k.into_iter().enumerate().map(|(i, v)| v.ok_or_else(|| Error::Invalid(format!("index {i} is in no group")))).collect::<Result<_>>()?;
        if k.iter().any(|e| *e > k[0]) {
            return Err(Error::Invalid("the time group must carry the largest exponent".into()));
        }
        Ok(Self { dim, groups, k })
    }

    /// Time scales like `ε²`, everything else like `ε`.
    pub fn two_group(dim: usize) -> Self {
        Self::new(dim, vec![
            ScaleGroup { name: "t".into(), members: vec![0], exponent: 2 },
            ScaleGroup { name: "x".into(), members: (1..dim).collect(), exponent: 1 },
        ])
        .expect("two-group partition")
    }

    /// Time `ε³`, the `y` indices `ε²`, the rest `ε`. Empty groups are dropped.
    pub fn three_group(dim: usize, y: &[usize]) -> Result<Self> {
        let groups = vec![
            ScaleGroup { name: "t".into(), members: vec![0], exponent: 3 },
            ScaleGroup { name: "y".into(), members: y.to_vec(), exponent: 2 },
            ScaleGroup { name: "x".into(), members: (1..dim).filter(|i| !y.contains(i)).collect(), exponent: 1 },
        ];
        Self::new(dim, groups.into_iter().filter(|g| !g.members.is_empty()).collect())
    }

    pub fn exponent(&self, mu: usize) -> i32 {
        self.k[mu]
    }

    pub fn group_name(&self, mu: usize) -> &str {
        &self.groups.iter().find(|g| g.members.contains(&mu)).expect("covered").name
    }

    fn symbol(&self, mu: usize, nu: usize, rho: usize) -> String {
        format!("C^{{{}{}}}_{}", self.group_name(mu), self.group_name(nu), self.group_name(rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Ok,
    RequiresConstraint,
    Diverges,
}

impl VerdictStatus {
    pub fn label(self) -> &'static str {
        match self {
            VerdictStatus::Ok => "ok",
            VerdictStatus::RequiresConstraint => "requires_constraint",
            VerdictStatus::Diverges => "diverges",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermKind {
    /// Coefficient of `dx^ρ` in `dx^μ • dx^ν`.
    Commutation { mu: usize, nu: usize, rho: usize },
    /// `r`-th order derivative term of `D_ρ f`.
    Expansion { r: usize, mus: Vec<usize>, rho: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub kind: TermKind,
    pub symbol: String,
    pub order: i32,
    pub coeff: f64,
}

/// `C^{μν}_ρ` must vanish at least like `ε^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub mu: usize,
    pub nu: usize,
    pub rho: usize,
    pub exponent: i32,
    pub symbol: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVerdict {
    pub status: VerdictStatus,
    pub divergent_terms: Vec<Term>,
    pub required_constraints: Vec<Constraint>,
    /// Terms of order exactly zero, i.e. those that survive the limit.
    pub surviving: Vec<Term>,
    /// Highest derivative order among surviving expansion terms (1 if only `∂_ρ`).
    pub surviving_order: usize,
    /// Limiting second-order coefficients on the time row (dim × dim).
    pub second_order: DMatrix<f64>,
}

impl ScalingVerdict {
    pub fn is_ok(&self) -> bool {
        self.status == VerdictStatus::Ok
    }

    pub fn second_order_psd(&self) -> bool {
        let m = &self.second_order;
        if m.iter().all(|v| v.abs() <= TOL) {
            return true;
        }
        let sym = (m + m.transpose()) * 0.5;
        let e = sym.symmetric_eigenvalues();
        let scale = e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        e.iter().all(|v| *v >= -1e-10 * scale.max(1.0))
    }
}

/// Assigns every commutation and expansion term its order in the small parameter.
pub fn order_analysis(c: &StructureConstants, part: &ScalingPartition) -> Result<ScalingVerdict> {
    crate::error::check_dim(c.dim, part.dim)?;
    let d = c.dim;
    let k = |m: usize| part.exponent(m);
    let mut terms = Vec::new();
    for mu in 0..d {
        for nu in mu..d {
            for rho in 0..d {
                let v = c.get(mu, nu, rho);
                if v.abs() > TOL {
                    let order = k(mu) + k(nu) - k(rho) + c.v(mu, nu, rho);
                    terms.push(Term { kind: TermKind::Commutation { mu, nu, rho }, symbol: part.symbol(mu, nu, rho), order, coeff: v });
                    terms.push(Term { kind: TermKind::Expansion { r: 2, mus: vec![mu, nu], rho }, symbol: part.symbol(mu, nu, rho), order, coeff: 0.5 * v });
                }
            }
        }
    }
    for m1 in 0..d {
        for m2 in m1..d {
            for m3 in m2..d {
                let perms = [[m1, m2, m3], [m1, m3, m2], [m2, m1, m3], [m2, m3, m1], [m3, m1, m2], [m3, m2, m1]];
                for rho in 0..d {
                    let mut parts: Vec<(i32, f64, usize)> = Vec::new();
                    for p in &perms {
                        for nu in 0..d {
                            let v = c.get(p[0], p[1], nu) * c.get(p[2], nu, rho);
                            if v.abs() > TOL {
                                let o = k(m1) + k(m2) + k(m3) - k(rho) + c.v(p[0], p[1], nu) + c.v(p[2], nu, rho);
                                parts.push((o, v, nu));
                            }
                        }
                    }
                    // repeated indices make several permutations coincide
                    let mult = distinct_perms(m1, m2, m3) as f64 / 6.0;
                    let mut orders: Vec<i32> = parts.iter().map(|p| p.0).collect();
                    orders.sort_unstable();
                    orders.dedup();
                    for o in orders {
                        let sum: f64 = parts.iter().filter(|p| p.0 == o).map(|p| p.1).sum::<f64>() * mult / 6.0;
                        if sum.abs() > TOL {
                            let nu = parts.iter().find(|p| p.0 == o).map(|p| p.2).unwrap_or(0);
                            let symbol = format!("{}{}", part.symbol(m1, m2, nu), part.symbol(m3, nu, rho));
                            terms.push(Term { kind: TermKind::Expansion { r: 3, mus: vec![m1, m2, m3], rho }, symbol, order: o, coeff: sum });
                            break;
                        }
                    }
                }
            }
        }
    }

    let divergent_terms: Vec<Term> = terms.iter().filter(|t| t.order < 0).cloned().collect();
    let mut required_constraints: Vec<Constraint> = Vec::new();
    for t in &divergent_terms {
        let (mu, nu, rho) = match &t.kind {
            TermKind::Commutation { mu, nu, rho } => (*mu, *nu, *rho),
            TermKind::Expansion { r: 2, mus, rho } => (mus[0], mus[1], *rho),
            TermKind::Expansion { mus, rho, .. } => {
                let nu = (0..d).find(|n| c.get(mus[0], mus[1], *n).abs() > TOL).unwrap_or(*rho);
                (mus[0], mus[1], nu)
            }
        };
        let exponent = c.v(mu, nu, rho) - t.order;
        if let Some(e) = required_constraints.iter_mut().find(|e| (e.mu, e.nu, e.rho) == (mu, nu, rho)) {
            e.exponent = e.exponent.max(exponent);
        } else {
            required_constraints.push(Constraint { mu, nu, rho, exponent, symbol: part.symbol(mu, nu, rho) });
        }
    }
    let status = if divergent_terms.is_empty() {
        VerdictStatus::Ok
    } else if c.rigid {
        VerdictStatus::Diverges
    } else {
        VerdictStatus::RequiresConstraint
    };
    let surviving: Vec<Term> = terms.iter().filter(|t| t.order == 0).cloned().collect();
    let surviving_order = surviving
        .iter()
        .filter_map(|t| match &t.kind {
            TermKind::Expansion { r, .. } => Some(*r),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    let mut second_order = DMatrix::zeros(d, d);
    for t in &surviving {
        if let TermKind::Commutation { mu, nu, rho: 0 } = t.kind {
            second_order[(mu, nu)] = t.coeff;
            second_order[(nu, mu)] = t.coeff;
        }
    }
    Ok(ScalingVerdict { status, divergent_terms, required_constraints, surviving, surviving_order, second_order })
}

fn distinct_perms(a: usize, b: usize, c: usize) -> usize {
    if a == b && b == c {
        1
    } else if a == b || b == c || a == c {
        3
    } else {
        6
    }
}

/// Hypercubic chart family under `a_i = β α_i`, `b = β³`.
#[derive(Debug, Clone, PartialEq)]
pub enum CubicFamily {
    Fixed { alpha: Vec<f64>, amat: DMatrix<f64> },
    /// `A(β) = A0 + β A1`.
    Affine { alpha: Vec<f64>, a0: DMatrix<f64>, a1: DMatrix<f64> },
}

impl CubicFamily {
    pub fn lightcone(alpha: f64) -> Self {
        CubicFamily::Fixed { alpha: vec![alpha], amat: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]) }
    }

    /// `A(β) = [[1, 1], [β, -1]]`: `B^μ_0 ≥ 0` and bounded θ₂.
    pub fn tilted(alpha: f64) -> Self {
        CubicFamily::Affine {
            alpha: vec![alpha],
            a0: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, -1.0]),
            a1: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        }
    }

    pub fn alpha(&self) -> &[f64] {
        match self {
            CubicFamily::Fixed { alpha, .. } | CubicFamily::Affine { alpha, .. } => alpha,
        }
    }

    pub fn amat(&self, beta: f64) -> DMatrix<f64> {
        match self {
            CubicFamily::Fixed { amat, .. } => amat.clone(),
            CubicFamily::Affine { a0, a1, .. } => a0 + a1 * beta,
        }
    }

    pub fn chart_at(&self, beta: f64) -> Result<CoordinateChart> {
        let a: Vec<f64> = self.alpha().iter().map(|x| x * beta).collect();
        CoordinateChart::new(&a, beta * beta * beta, self.amat(beta))
    }
}

/// `θ₂(ξ)` and `θ₃(ξ)` along a grid of `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSeries {
    pub beta: Vec<f64>,
    pub theta2: Vec<f64>,
    pub theta3: Vec<f64>,
    pub b0_min: Vec<f64>,
}

pub fn theta_functionals(family: &CubicFamily, xi: &[f64], grid: &[f64]) -> Result<ThetaSeries> {
    let alpha = family.alpha();
    crate::error::check_dim(alpha.len(), xi.len())?;
    let n = alpha.len();
    let mut out = ThetaSeries { beta: grid.to_vec(), theta2: Vec::new(), theta3: Vec::new(), b0_min: Vec::new() };
    for &beta in grid {
        let chart = family.chart_at(beta)?;
        let (am, b0) = (chart.amat(), chart.b0());
        let (mut t2, mut t3) = (0.0, 0.0);
        for mu in 0..=n {
            let s: f64 = (0..n).map(|i| xi[i] * alpha[i] * am[(i + 1, mu)]).sum();
            t2 += s * s * b0[mu];
            t3 += s * s * s * b0[mu];
        }
        out.theta2.push(t2 / (2.0 * beta));
        out.theta3.push(t3 / 6.0);
        out.b0_min.push(b0.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    Ok(out)
}

/// `count` points of the Halton sequence mapped to the unit sphere, followed by the axes.
pub fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let halton = |mut i: u32, base: u32| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    let mut dirs = Vec::with_capacity(count + n);
    for k in 1..=count as u32 {
        let v: Vec<f64> = if n == 1 {
            vec![if halton(k, 2) < 0.5 { -1.0 } else { 1.0 }]
        } else {
            // Box-Muller on pairs of Halton coordinates
            let mut g = Vec::with_capacity(n);
            let mut j = 0;
            while g.len() < n {
                let u1 = halton(k, PRIMES[j % 8]).max(1e-12);
                let u2 = halton(k, PRIMES[(j + 1) % 8]);
                let r = libm::sqrt(-2.0 * libm::log(u1));
                g.push(r * libm::cos(2.0 * core::f64::consts::PI * u2));
                g.push(r * libm::sin(2.0 * core::f64::consts::PI * u2));
                j += 2;
            }
            g.truncate(n);
            g
        };
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-12 {
            dirs.push(v.iter().map(|x| x / norm).collect());
        }
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e);
    }
    dirs
}

/// Verdict of the θ tests over a set of directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaReport {
    pub theta2_bounded: bool,
    pub theta3_vanishes: bool,
    /// `B^μ_0 ≥ 0` at every grid point.
    pub b0_nonnegative: bool,
    /// Bounded θ₂ with nonnegative `B^μ_0` forces θ₃ → 0.
    pub implication_holds: bool,
    /// Ratio of `max_ξ |θ₂|` between the two finest grid points.
    pub theta2_growth: f64,
    pub theta3_finest: f64,
    pub note: String,
}

/// `grid` must be decreasing with at least two points.
pub fn theta_report(family: &CubicFamily, grid: &[f64], directions: &[Vec<f64>]) -> Result<ThetaReport> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("β grid must be strictly decreasing with at least two points".into()));
    }
    let l = grid.len();
    // sup norms over directions, at the two finest scales
    let (mut p2, mut f2, mut p3, mut f3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut b0_ok = true;
    for xi in directions {
        let s = theta_functionals(family, xi, grid)?;
        p2 = p2.max(s.theta2[l - 2].abs());
        f2 = f2.max(s.theta2[l - 1].abs());
        p3 = p3.max(s.theta3[l - 2].abs());
        f3 = f3.max(s.theta3[l - 1].abs());
        if s.b0_min.iter().any(|v| *v < -TOL) {
            b0_ok = false;
        }
    }
    let growth = if p2 > 1e-300 { f2 / p2 } else if f2 > 1e-300 { f64::INFINITY } else { 0.0 };
    // θ₃ is rational in β, so a vanishing θ₃ shrinks by about 2^-k per halving
    let vanish = f3 < 1e-12 || f3 <= 0.75 * p3;
    let t3_fin = f3;
    let bounded = growth < 2.0;
    let implication_holds = !(bounded && b0_ok) || vanish;
    let note = if !b0_ok {
        String::from("B^mu_0 takes negative values: theta3 -> 0 is not guaranteed")
    } else if !bounded {
        String::from("theta2 diverges: no cubic limit for this chart")
    } else if vanish {
        String::from("theta2 bounded and theta3 -> 0")
    } else {
        String::from("theta2 bounded but theta3 does not vanish")
    };
    Ok(ThetaReport { theta2_bounded: bounded, theta3_vanishes: vanish, b0_nonnegative: b0_ok, implication_holds, theta2_growth: growth, theta3_finest: t3_fin, note })
}

/// One row of the second-order uniqueness table.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessRow {
    pub name: String,
    pub exists: bool,
    pub psd: bool,
    pub order: usize,
    pub verdict: ScalingVerdict,
}

pub fn second_order_uniqueness_report(entries: &[(String, StructureConstants, ScalingPartition)]) -> Result<Vec<UniquenessRow>> {
    entries
        .iter()
        .map(|(name, c, p)| {
            let v = order_analysis(c, p)?;
            Ok(UniquenessRow { name: name.clone(), exists: v.is_ok(), psd: v.second_order_psd(), order: v.surviving_order, verdict: v })
        })
        .collect()
}

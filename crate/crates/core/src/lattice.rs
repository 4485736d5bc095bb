//! Oriented hypercubic lattice on a finite window.
//!
//! Sites are integer points `u = (u^0, ..., u^N)` of a box. The only admitted
//! edges are `u -> u + μ̂`, so a one-form is a per-site block of `N + 1`
//! coefficients over `du^μ`, and the product is componentwise.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::graph_calculus::EdgeSet;
use crate::TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    ShrinkingDomain,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeWindow {
    lo: Vec<i64>,
    ext: Vec<usize>,
    policy: BoundaryPolicy,
}

impl LatticeWindow {
    /// Box `lo[μ] ..= hi[μ]` in each of the `N + 1` directions.
    pub fn new(lo: &[i64], hi: &[i64], policy: BoundaryPolicy) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.len() < 2 {
            return Err(Error::Invalid("a lattice needs at least two directions".into()));
        }
        let mut ext = Vec::with_capacity(lo.len());
        for (l, h) in lo.iter().zip(hi) {
            if h - l + 1 < 2 {
                return Err(Error::Invalid("every window extent must be at least 2".into()));
            }
            ext.push((h - l + 1) as usize);
        }
        Ok(Self { lo: lo.to_vec(), ext, policy })
    }

    /// Cube `0 ..= side-1` in `dim` directions.
    pub fn cube(dim: usize, side: usize, policy: BoundaryPolicy) -> Result<Self> {
        let lo = vec![0; dim];
        let hi = vec![side as i64 - 1; dim];
        Self::new(&lo, &hi, policy)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn policy(&self) -> BoundaryPolicy {
        self.policy
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn extents(&self) -> &[usize] {
        &self.ext
    }

    pub fn n_sites(&self) -> usize {
        self.ext.iter().product()
    }

    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0; self.dim()];
        for mu in (0..self.dim()).rev() {
            c[mu] = self.lo[mu] + (idx % self.ext[mu]) as i64;
            idx /= self.ext[mu];
        }
        c
    }

    /// Index of a site, wrapping under the periodic policy.
    pub fn index(&self, c: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for mu in 0..self.dim() {
            let e = self.ext[mu] as i64;
            let mut k = c[mu] - self.lo[mu];
            if self.policy == BoundaryPolicy::Periodic {
                k = k.rem_euclid(e);
            } else if k < 0 || k >= e {
                return None;
            }
            idx = idx * self.ext[mu] + k as usize;
        }
        Some(idx)
    }

    /// The site `u + μ̂`, if it resolves.
    pub fn neighbor(&self, idx: usize, mu: usize) -> Option<usize> {
        let mut c = self.coords(idx);
        c[mu] += 1;
        self.index(&c)
    }

    /// The window viewed as a digraph calculus with edges `u -> u + μ̂`.
    pub fn edge_set(&self) -> Result<EdgeSet> {
        let mut pairs = Vec::new();
        for i in 0..self.n_sites() {
            for mu in 0..self.dim() {
                if let Some(j) = self.neighbor(i, mu) {
                    if j != i {
                        pairs.push((i, j));
                    }
                }
            }
        }
        EdgeSet::from_pairs(self.n_sites(), pairs)
    }
}

/// Real function on the window with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub window: LatticeWindow,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LatticeField {
    pub fn from_fn(window: &LatticeWindow, f: impl Fn(&[i64]) -> f64) -> Self {
        let values = (0..window.n_sites()).map(|i| f(&window.coords(i))).collect();
        Self { window: window.clone(), values, valid: vec![true; window.n_sites()] }
    }

    /// Largest absolute value over valid sites.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().zip(&self.valid).filter(|(_, &v)| v).fold(0.0, |m, (x, _)| m.max(x.abs()))
    }
}

/// Per-site coefficients over `du^0, ..., du^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOneForm {
    pub window: LatticeWindow,
    /// `n_sites × dim`, site-major.
    pub comps: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LatticeOneForm {
    pub fn from_fn(window: &LatticeWindow, f: impl Fn(&[i64], usize) -> f64) -> Self {
        let d = window.dim();
        let mut comps = vec![0.0; window.n_sites() * d];
        for i in 0..window.n_sites() {
            let c = window.coords(i);
            for mu in 0..d {
                comps[i * d + mu] = f(&c, mu);
            }
        }
        Self { window: window.clone(), comps, valid: vec![true; window.n_sites()] }
    }

    pub fn constant(window: &LatticeWindow, s: &[f64]) -> Result<Self> {
        check_dim(window.dim(), s.len())?;
        Ok(Self::from_fn(window, |_, mu| s[mu]))
    }

    /// `du^μ`.
    pub fn coordinate(window: &LatticeWindow, mu: usize) -> Self {
        Self::from_fn(window, |_, nu| if nu == mu { 1.0 } else { 0.0 })
    }

    pub fn at(&self, site: usize) -> &[f64] {
        let d = self.window.dim();
        &self.comps[site * d..(site + 1) * d]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.comps.len(), other.comps.len())?;
        let mut out = self.clone();
        for (o, b) in out.comps.iter_mut().zip(&other.comps) {
            *o -= b;
        }
        for (v, w) in out.valid.iter_mut().zip(&other.valid) {
            *v &= *w;
        }
        Ok(out)
    }

    /// Subtract `g · w` with `g` a lattice field.
    pub fn sub_scaled(&self, g: &[f64], w: &Self) -> Result<Self> {
        check_dim(self.comps.len(), w.comps.len())?;
        let d = self.window.dim();
        let mut out = self.clone();
        for i in 0..self.window.n_sites() {
            for mu in 0..d {
                out.comps[i * d + mu] -= g[i] * w.comps[i * d + mu];
            }
        }
        Ok(out)
    }
}

/// The unit `ρ = Σ_μ du^μ`.
pub fn rho(window: &LatticeWindow) -> LatticeOneForm {
    LatticeOneForm::from_fn(window, |_, _| 1.0)
}

/// The time form `dt = -b ρ`.
pub fn time_form(window: &LatticeWindow, b: f64) -> LatticeOneForm {
    rho(window).scale(-b)
}

pub fn lattice_differential(f: &LatticeField) -> LatticeOneForm {
    let w = &f.window;
    let d = w.dim();
    let n = w.n_sites();
    let mut comps = vec![0.0; n * d];
    let mut valid = vec![true; n];
    for i in 0..n {
        for mu in 0..d {
            match w.neighbor(i, mu) {
                Some(j) => comps[i * d + mu] = f.values[j] - f.values[i],
                None => valid[i] = false,
            }
        }
        valid[i] &= f.valid[i];
    }
    LatticeOneForm { window: w.clone(), comps, valid }
}

/// Componentwise product in the `du^μ` basis.
pub fn bullet(w1: &LatticeOneForm, w2: &LatticeOneForm) -> Result<LatticeOneForm> {
    check_dim(w1.comps.len(), w2.comps.len())?;
    let comps = w1.comps.iter().zip(&w2.comps).map(|(a, b)| a * b).collect();
    let valid = w1.valid.iter().zip(&w2.valid).map(|(a, b)| *a && *b).collect();
    Ok(LatticeOneForm { window: w1.window.clone(), comps, valid })
}

/// `ρ • w`, which must reproduce `w`.
pub fn unit_form_check(w: &LatticeOneForm) -> LatticeOneForm {
    bullet(&rho(&w.window), w).expect("same window")
}

/// Per-site transition distribution over the `N + 1` lattice directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVectorField {
    pub window: LatticeWindow,
    /// `n_sites × dim`, site-major.
    pub p: Vec<f64>,
}

/// Check that `p` is a probability vector to within [`TOL`].
pub fn is_distribution(p: &[f64]) -> bool {
    let s: f64 = p.iter().sum();
    p.iter().all(|&v| v >= -TOL && v <= 1.0 + TOL) && (s - 1.0).abs() <= TOL
}

impl ProbabilityVectorField {
    pub fn new(window: &LatticeWindow, p: Vec<f64>) -> Result<Self> {
        let d = window.dim();
        check_dim(window.n_sites() * d, p.len())?;
        for (i, block) in p.chunks(d).enumerate() {
            if !is_distribution(block) {
                let bad = block.iter().position(|v| *v < -TOL || *v > 1.0 + TOL).unwrap_or(0);
                return Err(Error::Invalid(alloc::format!(
                    "site {:?}: {:?} is not a probability vector (component {bad})",
                    window.coords(i),
                    block
                )));
            }
        }
        Ok(Self { window: window.clone(), p })
    }

    pub fn from_fn(window: &LatticeWindow, f: impl Fn(&[i64], &mut [f64])) -> Result<Self> {
        let d = window.dim();
        let mut p = vec![0.0; window.n_sites() * d];
        for i in 0..window.n_sites() {
            f(&window.coords(i), &mut p[i * d..(i + 1) * d]);
        }
        Self::new(window, p)
    }

    pub fn constant(window: &LatticeWindow, p: &[f64]) -> Result<Self> {
        check_dim(window.dim(), p.len())?;
        Self::from_fn(window, |_, out| out.copy_from_slice(p))
    }

    pub fn at(&self, site: usize) -> &[f64] {
        let d = self.window.dim();
        &self.p[site * d..(site + 1) * d]
    }

    /// `X(f) = Σ_μ P^μ (f(u + μ̂) - f(u))`.
    pub fn apply(&self, f: &LatticeField) -> Result<LatticeField> {
        contract(&lattice_differential(f), self)
    }
}

/// `⟨w, X⟩ = Σ_μ w_μ P^μ` per site.
pub fn contract(w: &LatticeOneForm, x: &ProbabilityVectorField) -> Result<LatticeField> {
    check_dim(w.comps.len(), x.p.len())?;
    let d = w.window.dim();
    let values = (0..w.window.n_sites())
        .map(|i| (0..d).fold(0.0, |s, mu| s + w.comps[i * d + mu] * x.p[i * d + mu]))
        .collect();
    Ok(LatticeField { window: w.window.clone(), values, valid: w.valid.clone() })
}

/// Per-site `(N+1) × (N+1)` correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub dim: usize,
    /// `n_sites × dim × dim`, row-major blocks.
    pub entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn n_sites(&self) -> usize {
        self.entries.len() / (self.dim * self.dim)
    }

    pub fn block(&self, site: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.entries[site * d2..(site + 1) * d2]
    }

    pub fn at(&self, site: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, self.block(site))
    }

    pub fn min_eigenvalue(&self, site: usize) -> f64 {
        SymmetricEigen::new(self.at(site)).eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for s in 0..self.n_sites() {
            let b = self.block(s);
            for i in 0..d {
                for j in 0..d {
                    m = m.max((b[i * d + j] - b[j * d + i]).abs());
                }
            }
        }
        m
    }

    /// `max |ℙ (1, ..., 1)ᵀ|` over sites.
    pub fn kernel_residual(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for s in 0..self.n_sites() {
            let b = self.block(s);
            for i in 0..d {
                m = m.max(b[i * d..(i + 1) * d].iter().sum::<f64>().abs());
            }
        }
        m
    }

    pub fn is_zero_at(&self, site: usize) -> bool {
        self.block(site).iter().all(|v| v.abs() <= TOL)
    }
}

/// `P^{μν} = δ^{μν} P^μ - P^μ P^ν` per site.
pub fn correlation_matrix(x: &ProbabilityVectorField) -> CorrelationMatrix {
    let d = x.window.dim();
    let mut entries = vec![0.0; x.window.n_sites() * d * d];
    for s in 0..x.window.n_sites() {
        let p = x.at(s);
        let block = &mut entries[s * d * d..(s + 1) * d * d];
        for mu in 0..d {
            for nu in 0..d {
                let delta = if mu == nu { p[mu] } else { 0.0 };
                block[mu * d + nu] = delta - p[mu] * p[nu];
            }
        }
    }
    CorrelationMatrix { dim: d, entries }
}

/// Same matrix from `⟨(du^μ - P^μ ρ) • (du^ν - P^ν ρ), X⟩`.
pub fn correlation_matrix_via_forms(x: &ProbabilityVectorField) -> Result<CorrelationMatrix> {
    let w = &x.window;
    let d = w.dim();
    let n = w.n_sites();
    let r = rho(w);
    let alphas: Vec<LatticeOneForm> = (0..d)
        .map(|mu| {
            let pmu: Vec<f64> = (0..n).map(|s| x.at(s)[mu]).collect();
            LatticeOneForm::coordinate(w, mu).sub_scaled(&pmu, &r)
        })
        .collect::<Result<_>>()?;
    let mut entries = vec![0.0; n * d * d];
    for mu in 0..d {
        for nu in 0..d {
            let c = contract(&bullet(&alphas[mu], &alphas[nu])?, x)?;
            for s in 0..n {
                entries[s * d * d + mu * d + nu] = c.values[s];
            }
        }
    }
    Ok(CorrelationMatrix { dim: d, entries })
}

/// `sᵗ ℙ s` per site, with `s` the components of `w`.
pub fn variance_of_form(w: &LatticeOneForm, x: &ProbabilityVectorField) -> Result<LatticeField> {
    covariance_of_forms(w, w, x)
}

/// `s1ᵗ ℙ s2` per site.
pub fn covariance_of_forms(w1: &LatticeOneForm, w2: &LatticeOneForm, x: &ProbabilityVectorField) -> Result<LatticeField> {
    check_dim(w1.comps.len(), x.p.len())?;
    check_dim(w2.comps.len(), x.p.len())?;
    let cm = correlation_matrix(x);
    let d = cm.dim;
    let values = (0..x.window.n_sites())
        .map(|s| {
            let b = cm.block(s);
            let (s1, s2) = (w1.at(s), w2.at(s));
            let mut acc = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    acc += s1[mu] * b[mu * d + nu] * s2[nu];
                }
            }
            acc
        })
        .collect();
    let valid = w1.valid.iter().zip(&w2.valid).map(|(a, b)| *a && *b).collect();
    Ok(LatticeField { window: x.window.clone(), values, valid })
}

/// `⟨w•w, X⟩ - ⟨w, X⟩²`, the direct form of the variance.
pub fn variance_by_contraction(w: &LatticeOneForm, x: &ProbabilityVectorField) -> Result<LatticeField> {
    let ww = contract(&bullet(w, w)?, x)?;
    let m = contract(w, x)?;
    let values = ww.values.iter().zip(&m.values).map(|(a, b)| a - b * b).collect();
    Ok(LatticeField { values, ..ww })
}

//! First-order universal calculus on a finite set of sites.
//!
//! Functions are real vectors indexed by site. One-forms and vector fields are
//! sparse maps over ordered pairs `(i, j)` with `i != j`. The product of
//! one-forms is edgewise, `e_ij • e_kl = δ_ik δ_jl e_ij`.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::TOL;

/// Largest site count for which a dense endomorphism matrix is built.
pub const DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteSet {
    size: usize,
}

impl SiteSet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Invalid("site set must be nonempty".into()));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// The admitted directed edges of a calculus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    sites: SiteSet,
    admitted: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    /// All ordered pairs: the universal calculus.
    pub fn universal(size: usize) -> Result<Self> {
        let sites = SiteSet::new(size)?;
        let mut admitted = BTreeSet::new();
        for i in 0..size {
            for j in 0..size {
                if i != j {
                    admitted.insert((i, j));
                }
            }
        }
        Ok(Self { sites, admitted })
    }

    pub fn from_pairs(size: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let sites = SiteSet::new(size)?;
        let mut admitted = BTreeSet::new();
        for (i, j) in pairs {
            if i == j {
                return Err(Error::Invalid("self-loops are not edges".into()));
            }
            if i >= size || j >= size {
                return Err(Error::Dimension { expected: size, found: i.max(j) + 1 });
            }
            admitted.insert((i, j));
        }
        Ok(Self { sites, admitted })
    }

    pub fn size(&self) -> usize {
        self.sites.size
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.admitted.contains(&(i, j))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.admitted.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.admitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admitted.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("empty field".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("field values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(size: usize, c: f64) -> Self {
        Self { values: vec![c; size] }
    }

    /// Indicator function `e_i` of a single site.
    pub fn indicator(size: usize, i: usize) -> Self {
        let mut values = vec![0.0; size];
        values[i] = 1.0;
        Self { values }
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        check_dim(self.size(), other.size())?;
        Ok(ScalarField { values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse one-form `Σ w_ij e_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    size: usize,
    coeffs: BTreeMap<(usize, usize), f64>,
}

impl OneForm {
    pub fn zero(size: usize) -> Self {
        Self { size, coeffs: BTreeMap::new() }
    }

    pub fn from_coeffs(edges: &EdgeSet, coeffs: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self> {
        let mut w = Self::zero(edges.size());
        for ((i, j), c) in coeffs {
            if !edges.contains(i, j) {
                return Err(Error::Invalid("coefficient on an edge the calculus does not admit".into()));
            }
            w.set(i, j, c);
        }
        Ok(w)
    }

    /// Basis element `e_ij`.
    pub fn basis(size: usize, i: usize, j: usize) -> Self {
        let mut w = Self::zero(size);
        w.set(i, j, 1.0);
        w
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs.get(&(i, j)).copied().unwrap_or(0.0)
    }

    fn set(&mut self, i: usize, j: usize, c: f64) {
        if c == 0.0 {
            self.coeffs.remove(&(i, j));
        } else {
            self.coeffs.insert((i, j), c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    /// Left module action `f · w`, which scales `e_ij` by `f_i`.
    pub fn left_mul(&self, f: &ScalarField) -> Result<OneForm> {
        check_dim(self.size, f.size())?;
        let mut out = Self::zero(self.size);
        for ((i, j), c) in self.iter() {
            out.set(i, j, f.values[i] * c);
        }
        Ok(out)
    }

    /// Right module action `w · f`, which scales `e_ij` by `f_j`.
    pub fn right_mul(&self, f: &ScalarField) -> Result<OneForm> {
        check_dim(self.size, f.size())?;
        let mut out = Self::zero(self.size);
        for ((i, j), c) in self.iter() {
            out.set(i, j, c * f.values[j]);
        }
        Ok(out)
    }

    pub fn add(&self, other: &OneForm) -> Result<OneForm> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &OneForm) -> Result<OneForm> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &OneForm, s: f64) -> Result<OneForm> {
        check_dim(self.size, other.size)?;
        let mut out = self.clone();
        for ((i, j), c) in other.iter() {
            let v = out.get(i, j) + s * c;
            out.set(i, j, v);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> OneForm {
        let mut out = Self::zero(self.size);
        for ((i, j), c) in self.iter() {
            out.set(i, j, s * c);
        }
        out
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `X = Σ X^ij ∂_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphVectorField {
    size: usize,
    coeffs: BTreeMap<(usize, usize), f64>,
}

impl GraphVectorField {
    pub fn zero(size: usize) -> Self {
        Self { size, coeffs: BTreeMap::new() }
    }

    pub fn from_coeffs(edges: &EdgeSet, coeffs: impl IntoIterator<Item = ((usize, usize), f64)>) -> Result<Self> {
        let mut x = Self::zero(edges.size());
        for ((i, j), c) in coeffs {
            if !edges.contains(i, j) {
                return Err(Error::Invalid("coefficient on an edge the calculus does not admit".into()));
            }
            if c != 0.0 {
                x.coeffs.insert((i, j), c);
            }
        }
        Ok(x)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }
}

pub fn exterior_derivative(f: &ScalarField, edges: &EdgeSet) -> Result<OneForm> {
    check_dim(edges.size(), f.size())?;
    let mut w = OneForm::zero(edges.size());
    for (i, j) in edges.iter() {
        w.set(i, j, f.values[j] - f.values[i]);
    }
    Ok(w)
}

pub fn bullet(w1: &OneForm, w2: &OneForm) -> Result<OneForm> {
    check_dim(w1.size, w2.size)?;
    let mut out = OneForm::zero(w1.size);
    for ((i, j), c) in w1.iter() {
        let d = w2.get(i, j);
        out.set(i, j, c * d);
    }
    Ok(out)
}

/// `d(fg) - f dg - g df` with both scalars acting from the left.
pub fn leibniz_defect(f: &ScalarField, g: &ScalarField, edges: &EdgeSet) -> Result<OneForm> {
    let fg = f.mul(g)?;
    let d_fg = exterior_derivative(&fg, edges)?;
    let f_dg = exterior_derivative(g, edges)?.left_mul(f)?;
    let g_df = exterior_derivative(f, edges)?.left_mul(g)?;
    d_fg.sub(&f_dg)?.sub(&g_df)
}

/// Pairing `⟨w, X⟩_i = Σ_j w_ij X^ij`.
pub fn contract(w: &OneForm, x: &GraphVectorField) -> Result<ScalarField> {
    check_dim(w.size, x.size)?;
    let mut values = vec![0.0; w.size];
    for ((i, j), c) in x.iter() {
        values[i] += w.get(i, j) * c;
    }
    Ok(ScalarField { values })
}

/// `X(f)_i = Σ_j X^ij (f_j - f_i)`.
pub fn apply_vector_field(x: &GraphVectorField, f: &ScalarField) -> Result<ScalarField> {
    check_dim(x.size, f.size())?;
    let mut values = vec![0.0; x.size];
    for ((i, j), c) in x.iter() {
        values[i] += c * (f.values[j] - f.values[i]);
    }
    Ok(ScalarField { values })
}

/// `X(fg) - g X(f) - f X(g) - X(f) X(g)`.
pub fn endomorphism_defect(x: &GraphVectorField, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    let xfg = apply_vector_field(x, &f.mul(g)?)?;
    let xf = apply_vector_field(x, f)?;
    let xg = apply_vector_field(x, g)?;
    let values = (0..x.size)
        .map(|i| xfg.values[i] - g.values[i] * xf.values[i] - f.values[i] * xg.values[i] - xf.values[i] * xg.values[i])
        .collect();
    Ok(ScalarField { values })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    /// `φ = I + X` is an automorphism. `phi[i]` is the site map Φ, so that
    /// `φ(f)(i) = f(Φ(i))`, and `phi_inv` satisfies `φ(e_i) = e_{Φ⁻¹(i)}`.
    Flow { phi: Vec<usize>, phi_inv: Vec<usize> },
    EndomorphismOnly,
    General,
}

impl Classification {
    pub fn is_flow(&self) -> bool {
        matches!(self, Classification::Flow { .. })
    }
}

fn near(v: f64, target: f64) -> bool {
    (v - target).abs() <= TOL
}

/// Site map induced by `X` when every site has at most one nonzero coefficient, equal to one.
pub fn site_map(x: &GraphVectorField) -> Option<Vec<usize>> {
    let mut phi: Vec<usize> = (0..x.size).collect();
    let mut seen = vec![false; x.size];
    for ((i, j), c) in x.iter() {
        if near(c, 0.0) {
            continue;
        }
        if !near(c, 1.0) || seen[i] {
            return None;
        }
        seen[i] = true;
        phi[i] = j;
    }
    Some(phi)
}

pub fn classify_generator(x: &GraphVectorField) -> Classification {
    let Some(phi) = site_map(x) else {
        return Classification::General;
    };
    let mut phi_inv = vec![usize::MAX; x.size];
    for (i, &k) in phi.iter().enumerate() {
        if phi_inv[k] != usize::MAX {
            return Classification::EndomorphismOnly;
        }
        phi_inv[k] = i;
    }
    Classification::Flow { phi, phi_inv }
}

/// Dense matrix of `φ = I + X` acting on site values, `φ(f) = M f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraEndomorphism {
    pub size: usize,
    /// Row-major `size × size`.
    pub matrix: Vec<f64>,
}

impl AlgebraEndomorphism {
    pub fn from_vector_field(x: &GraphVectorField) -> Result<Self> {
        let n = x.size;
        if n > DENSE_CAP {
            return Err(Error::Unsupported(alloc::format!("dense endomorphism above {DENSE_CAP} sites")));
        }
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        for ((i, j), c) in x.iter() {
            matrix[i * n + j] += c;
            matrix[i * n + i] -= c;
        }
        Ok(Self { size: n, matrix })
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        check_dim(self.size, f.size())?;
        let n = self.size;
        let values = (0..n).map(|i| (0..n).map(|j| self.matrix[i * n + j] * f.values[j]).sum()).collect();
        Ok(ScalarField { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: &[f64]) -> ScalarField {
        ScalarField::new(v.to_vec()).unwrap()
    }

    #[test]
    fn derivative_on_three_sites() {
        let e = EdgeSet::universal(3).unwrap();
        let w = exterior_derivative(&field(&[0.0, 1.0, 4.0]), &e).unwrap();
        let expect = [((0, 1), 1.0), ((0, 2), 4.0), ((1, 2), 3.0), ((1, 0), -1.0), ((2, 0), -4.0), ((2, 1), -3.0)];
        for ((i, j), c) in expect {
            assert_eq!(w.get(i, j), c);
        }
        let w = exterior_derivative(&ScalarField::indicator(3, 0), &e).unwrap();
        assert_eq!(w.get(1, 0), 1.0);
        assert_eq!(w.get(2, 0), 1.0);
        assert_eq!(w.get(0, 1), -1.0);
        assert_eq!(w.get(0, 2), -1.0);
        assert_eq!(exterior_derivative(&ScalarField::constant(3, 2.5), &e).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn derivative_size_mismatch() {
        let e = EdgeSet::universal(3).unwrap();
        assert!(matches!(exterior_derivative(&field(&[1.0, 2.0]), &e), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bullet_examples() {
        let e01 = OneForm::basis(3, 0, 1);
        let e02 = OneForm::basis(3, 0, 2);
        assert_eq!(bullet(&e01, &e01).unwrap(), e01);
        assert_eq!(bullet(&e01, &e02).unwrap().max_abs(), 0.0);
        let e = EdgeSet::universal(3).unwrap();
        let w1 = OneForm::from_coeffs(&e, [((0, 1), 2.0), ((1, 2), 3.0)]).unwrap();
        let w2 = OneForm::from_coeffs(&e, [((0, 1), 5.0)]).unwrap();
        let p = bullet(&w1, &w2).unwrap();
        assert_eq!(p.get(0, 1), 10.0);
        assert_eq!(p.iter().count(), 1);
    }

    #[test]
    fn leibniz_two_site_chain() {
        let e = EdgeSet::from_pairs(2, [(0, 1)]).unwrap();
        let f = field(&[0.0, 1.0]);
        let d = leibniz_defect(&f, &f, &e).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
    }

    #[test]
    fn vector_field_examples() {
        let e = EdgeSet::universal(3).unwrap();
        let x = GraphVectorField::from_coeffs(&e, [((0, 1), 1.0)]).unwrap();
        assert_eq!(apply_vector_field(&x, &field(&[0.0, 5.0, 0.0])).unwrap().values, [5.0, 0.0, 0.0]);
        let x = GraphVectorField::from_coeffs(&e, [((0, 1), 0.5), ((0, 2), 0.5)]).unwrap();
        assert_eq!(apply_vector_field(&x, &field(&[0.0, 2.0, 4.0])).unwrap().values, [3.0, 0.0, 0.0]);
        let f = field(&[0.0, 1.0, 2.0]);
        let d = endomorphism_defect(&x, &f, &f).unwrap();
        assert!((d.values[0] - 0.25).abs() < 1e-15);
        assert_eq!(classify_generator(&x), Classification::General);
    }

    #[test]
    fn classification_examples() {
        let e = EdgeSet::universal(3).unwrap();
        let cyc = GraphVectorField::from_coeffs(&e, [((0, 1), 1.0), ((1, 2), 1.0), ((2, 0), 1.0)]).unwrap();
        match classify_generator(&cyc) {
            Classification::Flow { phi, phi_inv } => {
                assert_eq!(phi, [1, 2, 0]);
                assert_eq!(phi_inv, [2, 0, 1]);
            }
            c => panic!("{c:?}"),
        }
        let merge = GraphVectorField::from_coeffs(&e, [((0, 2), 1.0), ((1, 2), 1.0), ((2, 0), 1.0)]).unwrap();
        assert_eq!(classify_generator(&merge), Classification::EndomorphismOnly);
        match classify_generator(&GraphVectorField::zero(4)) {
            Classification::Flow { phi, .. } => assert_eq!(phi, [0, 1, 2, 3]),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn endomorphism_matrix_matches_site_map() {
        let e = EdgeSet::universal(3).unwrap();
        let cyc = GraphVectorField::from_coeffs(&e, [((0, 1), 1.0), ((1, 2), 1.0), ((2, 0), 1.0)]).unwrap();
        let m = AlgebraEndomorphism::from_vector_field(&cyc).unwrap();
        let f = field(&[3.0, 5.0, 7.0]);
        assert_eq!(m.apply(&f).unwrap().values, [5.0, 7.0, 3.0]);
        assert_eq!(m.apply(&ScalarField::constant(3, 1.0)).unwrap().values, [1.0; 3]);
    }
}

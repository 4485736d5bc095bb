//! Exact slice-by-slice evolution on the lattice.
//!
//! A slice is a field on the layer `s = Σ_μ u^μ`, indexed by the spatial
//! lattice coordinates `v = (u^1, ..., u^N)`. Direction `0` keeps `v`,
//! direction `i` adds `ê_i`. Observable steps solve `X(f) = 0` for the
//! earlier layer; distribution steps push mass along the same edges, so the
//! two are exact adjoints.
//!
//! Kernels write every output entry independently with a fixed summation
//! order over directions, so results do not depend on how a [`Schedule`]
//! splits the work.

use alloc::vec;
use alloc::vec::Vec;

use crate::charts::{CoordinateChart, ScalingFamily};
use crate::dynamics::{DriftSpec, TransitionRule};
use crate::error::{check_dim, Error, Result};

/// Splits an output buffer into disjoint chunks and runs a kernel on each.
pub trait Schedule: Sync {
    /// Calls `kernel(offset, chunk)` for consecutive chunks of `out` of length `chunk` (the last may be shorter).
    fn run(&self, out: &mut [f64], chunk: usize, kernel: &(dyn Fn(usize, &mut [f64]) + Sync));
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Schedule for Serial {
    fn run(&self, out: &mut [f64], chunk: usize, kernel: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        for (k, c) in out.chunks_mut(chunk.max(1)).enumerate() {
            kernel(k * chunk.max(1), c);
        }
    }
}

/// Physical position of slice sites: `x(v, s) = s·base + M v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGeometry {
    pub n: usize,
    pub b: f64,
    pub base: Vec<f64>,
    /// Row-major `N × N`, `M_ij = a_i (A^i_j - A^i_0)`.
    pub m: Vec<f64>,
    minv: Vec<f64>,
}

impl SliceGeometry {
    pub fn new(chart: &CoordinateChart) -> Result<Self> {
        let n = chart.n();
        let a = chart.amat();
        let base: Vec<f64> = (1..=n).map(|i| chart.a()[i - 1] * a[(i, 0)]).collect();
        let m: Vec<f64> = (0..n * n).map(|k| {
            let (i, j) = (k / n + 1, k % n + 1);
            chart.a()[i - 1] * (a[(i, j)] - a[(i, 0)])
        }).collect();
        let mm = nalgebra::DMatrix::from_row_slice(n, n, &m);
        let inv = mm.try_inverse().ok_or(Error::Singular)?;
        let minv = (0..n * n).map(|k| inv[(k / n, k % n)]).collect();
        Ok(Self { n, b: chart.b(), base, m, minv })
    }

    pub fn position(&self, v: &[i64], layer: i64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut x = self.base[i] * layer as f64;
            for j in 0..n {
                x += self.m[i * n + j] * v[j] as f64;
            }
            out[i] = x;
        }
    }

    /// Real-valued slice coordinates of a physical point on a layer.
    pub fn coords_real(&self, x: &[f64], layer: i64) -> Vec<f64> {
        let n = self.n;
        let r: Vec<f64> = (0..n).map(|i| x[i] - self.base[i] * layer as f64).collect();
        (0..n).map(|i| (0..n).map(|j| self.minv[i * n + j] * r[j]).sum()).collect()
    }

    /// Slice coordinates of an exact image point.
    pub fn coords(&self, x: &[f64], layer: i64) -> Result<Vec<i64>> {
        let v = self.coords_real(x, layer);
        let mut out = Vec::with_capacity(self.n);
        for c in v {
            let r = libm::round(c);
            if (c - r).abs() > crate::charts::SNAP_TOL * c.abs().max(1.0) {
                return Err(Error::OffLattice { position: x.to_vec() });
            }
            out.push(r as i64);
        }
        Ok(out)
    }

    /// Nearest image point on a layer, with its position.
    pub fn nearest(&self, x: &[f64], layer: i64) -> (Vec<i64>, Vec<f64>) {
        let v: Vec<i64> = self.coords_real(x, layer).iter().map(|c| libm::round(*c) as i64).collect();
        let mut p = vec![0.0; self.n];
        self.position(&v, layer, &mut p);
        (v, p)
    }

    /// Smallest slice box whose images on `layer` cover the physical box `lo..=hi`.
    pub fn covering_box(&self, lo: &[f64], hi: &[f64], layer: i64) -> (Vec<i64>, Vec<usize>) {
        let n = self.n;
        let mut vmin = vec![f64::INFINITY; n];
        let mut vmax = vec![f64::NEG_INFINITY; n];
        let mut corner = vec![0.0; n];
        for mask in 0..(1usize << n) {
            for i in 0..n {
                corner[i] = if mask >> i & 1 == 1 { hi[i] } else { lo[i] };
            }
            let v = self.coords_real(&corner, layer);
            for i in 0..n {
                vmin[i] = vmin[i].min(v[i]);
                vmax[i] = vmax[i].max(v[i]);
            }
        }
        let l: Vec<i64> = vmin.iter().map(|v| libm::floor(*v + 1e-9) as i64).collect();
        let e = vmax.iter().zip(&l).map(|(v, l)| (libm::ceil(*v - 1e-9) as i64 - l + 1).max(1) as usize).collect();
        (l, e)
    }
}

/// Contiguous run of sites along the last axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSpan {
    pub start: i64,
    pub len: usize,
    /// Offset of the first entry in `values`.
    pub off: usize,
}

impl RowSpan {
    fn end(&self) -> i64 {
        self.start + self.len as i64
    }
}

/// Field on one lattice layer, stored as rows along the last axis.
///
/// Rows are indexed row-major over the box `lo .. lo + ext` of the other
/// axes; each row keeps its own range, so sheared supports stay compact.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub lo: Vec<i64>,
    pub ext: Vec<usize>,
    pub rows: Vec<RowSpan>,
    pub values: Vec<f64>,
    pub layer: i64,
    pub steps: usize,
}

impl Slice {
    pub fn dim(&self) -> usize {
        self.lo.len() + 1
    }

    pub fn n_sites(&self) -> usize {
        self.values.len()
    }

    /// Sites covered by the rows, whether or not values are filled in yet.
    fn span(&self) -> usize {
        self.rows.last().map_or(0, |r| r.off + r.len)
    }

    /// Full box `lo .. lo + ext` over all axes, values in row-major order.
    pub fn from_box(lo: &[i64], ext: &[usize], values: Vec<f64>, layer: i64) -> Self {
        let n = lo.len();
        let nrows: usize = ext[..n - 1].iter().product();
        let len = ext[n - 1];
        assert_eq!(values.len(), nrows * len);
        let rows = (0..nrows).map(|r| RowSpan { start: lo[n - 1], len, off: r * len }).collect();
        Self { lo: lo[..n - 1].to_vec(), ext: ext[..n - 1].to_vec(), rows, values, layer, steps: 0 }
    }

    /// Unit mass at one site.
    pub fn delta(v: &[i64], layer: i64) -> Self {
        Self::from_box(v, &vec![1; v.len()], vec![1.0], layer)
    }

    /// Values `f(x)` at the images of the box `lo .. lo + ext`.
    pub fn from_fn(geom: &SliceGeometry, lo: &[i64], ext: &[usize], layer: i64, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut s = Self::from_box(lo, ext, vec![0.0; ext.iter().product()], layer);
        let mut vals = Vec::with_capacity(s.n_sites());
        s.for_each(geom, |_, x, _| vals.push(f(x)));
        s.values = vals;
        s
    }

    pub fn prefix_coords(&self, r: usize, out: &mut [i64]) {
        let mut r = r;
        for i in (0..self.lo.len()).rev() {
            out[i] = self.lo[i] + (r % self.ext[i]) as i64;
            r /= self.ext[i];
        }
    }

    fn row_index(&self, prefix: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..self.lo.len() {
            let k = prefix[i] - self.lo[i];
            if k < 0 || k >= self.ext[i] as i64 {
                return None;
            }
            idx = idx * self.ext[i] + k as usize;
        }
        Some(idx)
    }

    pub fn index(&self, v: &[i64]) -> Option<usize> {
        let n = self.lo.len();
        let row = self.rows[self.row_index(&v[..n])?];
        let k = v[n] - row.start;
        (k >= 0 && k < row.len as i64).then(|| row.off + k as usize)
    }

    pub fn get(&self, v: &[i64]) -> f64 {
        self.index(v).map(|i| self.values[i]).unwrap_or(0.0)
    }

    fn row_of(&self, k: usize) -> usize {
        self.rows.partition_point(|r| r.off + r.len <= k)
    }

    pub fn coords(&self, k: usize, out: &mut [i64]) {
        let r = self.row_of(k);
        self.prefix_coords(r, out);
        out[self.lo.len()] = self.rows[r].start + (k - self.rows[r].off) as i64;
    }

    /// Bounding box over all axes.
    pub fn bounding_box(&self) -> (Vec<i64>, Vec<usize>) {
        let mut lo = self.lo.clone();
        let mut ext = self.ext.clone();
        let s = self.rows.iter().filter(|r| r.len > 0).map(|r| r.start).min().unwrap_or(0);
        let e = self.rows.iter().filter(|r| r.len > 0).map(|r| r.end()).max().unwrap_or(s);
        lo.push(s);
        ext.push((e - s) as usize);
        (lo, ext)
    }

    /// Visits every site in storage order with its coordinates and position.
    pub fn for_each(&self, geom: &SliceGeometry, mut f: impl FnMut(&[i64], &[f64], f64)) {
        let mut cur = Cursor::new(self, geom, 0);
        for &val in &self.values {
            f(&cur.v, &cur.x, val);
            cur.advance(self, geom);
        }
    }
}

/// Walks the sites of a slice in storage order, keeping coordinates and position current.
struct Cursor {
    row: usize,
    k: usize,
    v: Vec<i64>,
    x: Vec<f64>,
    /// Position of the row at last coordinate 0.
    x0: Vec<f64>,
}

impl Cursor {
    fn new(s: &Slice, geom: &SliceGeometry, k: usize) -> Self {
        let n = s.dim();
        let mut c = Cursor { row: 0, k, v: vec![0; n], x: vec![0.0; n], x0: vec![0.0; n] };
        if k < s.span() {
            c.row = s.row_of(k);
            c.enter_row(s, geom);
            c.v[n - 1] = s.rows[c.row].start + (k - s.rows[c.row].off) as i64;
            c.place(geom);
        }
        c
    }

    fn enter_row(&mut self, s: &Slice, geom: &SliceGeometry) {
        let n = s.dim();
        s.prefix_coords(self.row, &mut self.v);
        self.v[n - 1] = 0;
        geom.position(&self.v, s.layer, &mut self.x0);
        self.v[n - 1] = s.rows[self.row].start;
    }

    fn place(&mut self, geom: &SliceGeometry) {
        let n = self.v.len();
        let t = self.v[n - 1] as f64;
        for i in 0..n {
            self.x[i] = self.x0[i] + geom.m[i * n + n - 1] * t;
        }
    }

    fn advance(&mut self, s: &Slice, geom: &SliceGeometry) {
        self.k += 1;
        if self.k >= s.span() {
            return;
        }
        let n = self.v.len();
        if self.k < s.rows[self.row].off + s.rows[self.row].len {
            self.v[n - 1] += 1;
        } else {
            self.row += 1;
            while s.rows[self.row].len == 0 {
                self.row += 1;
            }
            self.enter_row(s, geom);
        }
        self.place(geom);
    }
}

/// Physical box that distribution support must stay inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    /// Intersection with per-axis admissible intervals, pulled in by a relative `1e-9`.
    pub fn clipped(&self, bounds: &[(f64, f64)]) -> Self {
        let mut d = self.clone();
        for (i, (l, h)) in bounds.iter().enumerate() {
            let pad = 1e-9 * (h - l).abs().min(1e12);
            d.lo[i] = d.lo[i].max(l + pad);
            d.hi[i] = d.hi[i].min(h - pad);
        }
        d
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, v)| {
            let slack = 1e-12 * (self.hi[i] - self.lo[i]).abs().max(1.0);
            *v >= self.lo[i] - slack && *v <= self.hi[i] + slack
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Observable,
    Distribution,
}

/// Chart, drift and scheduler bundled for stepping.
pub struct Evolver<'s> {
    pub rule: TransitionRule,
    pub geom: SliceGeometry,
    sched: &'s dyn Schedule,
    chunk: usize,
}

/// Output entries per scheduled chunk.
const CHUNK: usize = 4096;

impl<'s> Evolver<'s> {
    pub fn new(chart: &CoordinateChart, drift: &DriftSpec, sched: &'s dyn Schedule) -> Result<Self> {
        Ok(Self { rule: TransitionRule::new(chart, drift)?, geom: SliceGeometry::new(chart)?, sched, chunk: CHUNK })
    }

    /// Fills `out` (one entry per site of `shape`) with `f(position, k)` in parallel chunks.
    fn map_sites(&self, shape: &Slice, out: &mut [f64], per_site: usize, f: &(dyn Fn(&[f64], usize, &mut [f64]) + Sync)) {
        self.sched.run(out, self.chunk * per_site, &|off, chunk: &mut [f64]| {
            let mut cur = Cursor::new(shape, &self.geom, off / per_site);
            for block in chunk.chunks_mut(per_site) {
                f(&cur.x, cur.k, block);
                cur.advance(shape, &self.geom);
            }
        });
    }

    /// `f_t(v) = Σ_μ P^μ(v) f_{t-b}(v + shift_μ)`, one layer down; every row loses its top site.
    pub fn step_observable(&self, s: &Slice) -> Result<Slice> {
        let n = self.geom.n;
        let m = n - 1;
        if s.ext.iter().any(|e| *e <= 1) {
            return Err(Error::Exhausted { steps: s.steps });
        }
        let ext: Vec<usize> = s.ext.iter().map(|e| e - 1).collect();
        let nrows: usize = ext.iter().product();
        let mut rows = Vec::with_capacity(nrows);
        let mut p = vec![0; m];
        let mut q = vec![0; m];
        let mut off = 0;
        let shape = Slice { lo: s.lo.clone(), ext, rows: Vec::new(), values: Vec::new(), layer: s.layer - 1, steps: s.steps + 1 };
        for r in 0..nrows {
            shape.prefix_coords(r, &mut p);
            let (mut lo, mut hi) = (i64::MIN, i64::MAX);
            for mu in 0..=n {
                q.copy_from_slice(&p);
                let mut last = 0;
                if mu >= 1 && mu <= m {
                    q[mu - 1] += 1;
                } else if mu == n {
                    last = 1;
                }
                let src = s.rows[s.row_index(&q).expect("inside source box")];
                lo = lo.max(src.start - last);
                hi = hi.min(src.end() - last);
            }
            if hi <= lo {
                return Err(Error::Exhausted { steps: s.steps });
            }
            rows.push(RowSpan { start: lo, len: (hi - lo) as usize, off });
            off += (hi - lo) as usize;
        }
        let mut out = Slice { rows, values: Vec::new(), ..shape };
        let mut vals = vec![0.0; off];
        self.map_sites(&out, &mut vals, 1, &|x, k, o| {
            let mut pr = [0.0f64; 17];
            let pr = &mut pr[..=n];
            if self.rule.probs_at(x, pr) {
                let mut v = [0i64; 16];
                let v = &mut v[..n];
                out.coords(k, v);
                let mut acc = 0.0;
                for mu in 0..=n {
                    if mu >= 1 {
                        v[mu - 1] += 1;
                    }
                    acc += pr[mu] * s.get(v);
                    if mu >= 1 {
                        v[mu - 1] -= 1;
                    }
                }
                o[0] = acc;
            } else {
                o[0] = f64::NAN;
            }
        });
        if let Some(k) = vals.iter().position(|v| v.is_nan()) {
            let mut v = vec![0; n];
            out.coords(k, &mut v);
            let mut x = vec![0.0; n];
            self.geom.position(&v, out.layer, &mut x);
            return Err(self.rule.out_of_range(&x));
        }
        out.values = vals;
        Ok(out)
    }

    /// Pushes mass at `(v, s)` to `(v + shift_μ, s + 1)` with weight `P^μ(x(v, s))`.
    ///
    /// Returns the new slice and the mass dropped under `trim_tol`.
    pub fn step_distribution(&self, s: &Slice, trim_tol: f64, domain: Option<&Domain>) -> Result<(Slice, f64)> {
        let n = self.geom.n;
        let m = n - 1;
        let d = n + 1;
        // w[k d + μ] = P^μ σ_k
        let mut w = vec![0.0; s.n_sites() * d];
        let along: Vec<f64> = (0..n).map(|i| self.geom.m[i * n + n - 1]).collect();
        if let Some(dp) = self.rule.affine_gradient(&along) {
            self.weights_affine(s, &mut w, &dp);
        } else {
            self.map_sites(s, &mut w, d, &|x, k, o| {
                if self.rule.probs_at(x, o) {
                    let sig = s.values[k];
                    o.iter_mut().for_each(|p| *p *= sig);
                } else {
                    o.iter_mut().for_each(|p| *p = f64::NAN);
                }
            });
        }
        let mut leaked = 0.0;
        for k in 0..s.n_sites() {
            if w[k * d].is_nan() {
                if s.values[k].abs() > trim_tol {
                    let mut v = vec![0; n];
                    let mut x = vec![0.0; n];
                    s.coords(k, &mut v);
                    self.geom.position(&v, s.layer, &mut x);
                    return Err(self.rule.out_of_range(&x));
                }
                leaked += s.values[k];
                w[k * d..(k + 1) * d].iter_mut().for_each(|p| *p = 0.0);
            }
        }

        let ext: Vec<usize> = s.ext.iter().map(|e| e + 1).collect();
        let nrows: usize = ext.iter().product();
        let mut shape = Slice { lo: s.lo.clone(), ext, rows: Vec::with_capacity(nrows), values: Vec::new(), layer: s.layer + 1, steps: s.steps + 1 };
        // sources[r * d + μ]: source row feeding output row r along direction μ
        let mut sources = vec![usize::MAX; nrows * d];
        let mut p = vec![0; m];
        let mut off = 0;
        for r in 0..nrows {
            shape.prefix_coords(r, &mut p);
            let (mut lo, mut hi) = (i64::MAX, i64::MIN);
            for mu in 0..d {
                let mut last = 0;
                if mu >= 1 && mu <= m {
                    p[mu - 1] -= 1;
                } else if mu == n {
                    last = 1;
                }
                if let Some(sr) = s.row_index(&p) {
                    let src = s.rows[sr];
                    if src.len > 0 {
                        sources[r * d + mu] = sr;
                        lo = lo.min(src.start + last);
                        hi = hi.max(src.end() + last);
                    }
                }
                if mu >= 1 && mu <= m {
                    p[mu - 1] += 1;
                }
            }
            let len = if hi > lo { (hi - lo) as usize } else { 0 };
            shape.rows.push(RowSpan { start: if len > 0 { lo } else { 0 }, len, off });
            off += len;
        }
        let mut vals = vec![0.0; off];
        let w = &w;
        let sources = &sources;
        let sh = &shape;
        self.sched.run(&mut vals, self.chunk, &|start, chunk: &mut [f64]| {
            let end = start + chunk.len();
            let mut r = sh.row_of(start);
            while r < sh.rows.len() && sh.rows[r].off < end {
                let row = sh.rows[r];
                let a = row.off.max(start);
                let b = (row.off + row.len).min(end);
                if a < b {
                    for mu in 0..d {
                        let sr = sources[r * d + mu];
                        if sr == usize::MAX {
                            continue;
                        }
                        let src = s.rows[sr];
                        let last = i64::from(mu == n && n >= 1);
                        // output last coordinate c receives source c - last
                        let c_lo = (row.start + (a - row.off) as i64).max(src.start + last);
                        let c_hi = (row.start + (b - row.off) as i64).min(src.end() + last);
                        if c_lo < c_hi {
                            let o0 = row.off + (c_lo - row.start) as usize - start;
                            let k0 = src.off + (c_lo - last - src.start) as usize;
                            let dst = &mut chunk[o0..o0 + (c_hi - c_lo) as usize];
                            for (o, x) in dst.iter_mut().zip(w[k0 * d + mu..].iter().step_by(d)) {
                                *o += *x;
                            }
                        }
                    }
                }
                r += 1;
            }
        });
        shape.values = vals;
        let mut out = shape;
        leaked += trim(&mut out, trim_tol);
        if let Some(dom) = domain {
            leaked += self.enforce_domain(&mut out, dom, trim_tol)?;
        }
        Ok((out, leaked))
    }

    /// `P^μ σ` for affine drifts: each row takes `P` at its first site plus `k dp`.
    fn weights_affine(&self, s: &Slice, w: &mut [f64], dp: &[f64]) {
        let n = self.geom.n;
        let d = n + 1;
        self.sched.run(w, self.chunk * d, &|start, chunk: &mut [f64]| {
            let (first, end) = (start / d, (start + chunk.len()) / d);
            let mut r = s.row_of(first);
            let mut v = [0i64; 16];
            let v = &mut v[..n];
            let mut x = [0.0f64; 16];
            let x = &mut x[..n];
            let mut p0 = [0.0f64; 17];
            let p0 = &mut p0[..d];
            while r < s.rows.len() && s.rows[r].off < end {
                let row = s.rows[r];
                let (a, b) = (row.off.max(first), (row.off + row.len).min(end));
                if a < b {
                    s.prefix_coords(r, v);
                    v[n - 1] = row.start;
                    self.geom.position(v, s.layer, x);
                    self.rule.probs_raw(x, p0);
                    let out = &mut chunk[(a - first) * d..(b - first) * d];
                    let sig = &s.values[a..b];
                    let j0 = a - row.off;
                    match d {
                        2 => fill_row::<2>(out, sig, p0, dp, j0),
                        3 => fill_row::<3>(out, sig, p0, dp, j0),
                        4 => fill_row::<4>(out, sig, p0, dp, j0),
                        _ => fill_row_dyn(out, sig, p0, dp, j0),
                    }
                }
                r += 1;
            }
        });
    }

    fn enforce_domain(&self, s: &mut Slice, dom: &Domain, tol: f64) -> Result<f64> {
        let n = self.geom.n;
        let mut v = vec![0; n];
        let mut x = vec![0.0; n];
        let mut leaked = 0.0;
        for r in 0..s.rows.len() {
            let row = s.rows[r];
            if row.len == 0 {
                continue;
            }
            s.prefix_coords(r, &mut v);
            let mut inside = true;
            for c in [row.start, row.end() - 1] {
                v[n - 1] = c;
                self.geom.position(&v, s.layer, &mut x);
                inside &= dom.contains(&x);
            }
            if inside {
                continue;
            }
            for k in 0..row.len {
                let val = s.values[row.off + k];
                if val == 0.0 {
                    continue;
                }
                v[n - 1] = row.start + k as i64;
                self.geom.position(&v, s.layer, &mut x);
                if !dom.contains(&x) {
                    if val.abs() > tol {
                        return Err(Error::BoundaryReached { step: s.steps, position: x.clone() });
                    }
                    leaked += val;
                    s.values[row.off + k] = 0.0;
                }
            }
        }
        Ok(leaked)
    }

    pub fn moments(&self, s: &Slice) -> MomentRow {
        let n = self.geom.n;
        let mut mass = 0.0;
        let mut sx = vec![0.0; n];
        let mut sxx = vec![0.0; n * n];
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        s.for_each(&self.geom, |_, x, w| {
            min = min.min(w);
            max = max.max(w);
            if w == 0.0 {
                return;
            }
            mass += w;
            for i in 0..n {
                sx[i] += w * x[i];
                for j in i..n {
                    sxx[i * n + j] += w * x[i] * x[j];
                }
            }
        });
        let mean: Vec<f64> = sx.iter().map(|v| v / mass).collect();
        let mut cov = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                cov.push(sxx[i * n + j] / mass - mean[i] * mean[j]);
            }
        }
        MomentRow { t: s.steps as f64 * self.geom.b, mass, mean, cov, min, max }
    }
}

/// `out[i] = P(j0 + i) σ_i` with `P(j) = p0 + j dp`, or NaN where `P` is not a distribution.
fn fill_row<const D: usize>(out: &mut [f64], sig: &[f64], p0: &[f64], dp: &[f64], j0: usize) {
    let p0: [f64; D] = p0.try_into().expect("direction count");
    let dp: [f64; D] = dp.try_into().expect("direction count");
    for (i, (o, &sg)) in out.chunks_exact_mut(D).zip(sig).enumerate() {
        let j = (j0 + i) as f64;
        let mut p = [0.0; D];
        for mu in 0..D {
            p[mu] = p0[mu] + j * dp[mu];
        }
        if crate::dynamics::settle(&mut p) {
            for mu in 0..D {
                o[mu] = p[mu] * sg;
            }
        } else {
            o.fill(f64::NAN);
        }
    }
}

fn fill_row_dyn(out: &mut [f64], sig: &[f64], p0: &[f64], dp: &[f64], j0: usize) {
    let d = p0.len();
    for (i, (o, &sg)) in out.chunks_exact_mut(d).zip(sig).enumerate() {
        let j = (j0 + i) as f64;
        for mu in 0..d {
            o[mu] = p0[mu] + j * dp[mu];
        }
        if crate::dynamics::settle(o) {
            o.iter_mut().for_each(|p| *p *= sg);
        } else {
            o.fill(f64::NAN);
        }
    }
}

/// Drops row ends, then boundary rows, whose entries are all within `tol` of zero.
fn trim(s: &mut Slice, tol: f64) -> f64 {
    let mut dropped = 0.0;
    let mut changed = false;
    for row in s.rows.iter_mut() {
        while row.len > 0 && s.values[row.off].abs() <= tol {
            dropped += s.values[row.off];
            row.off += 1;
            row.start += 1;
            row.len -= 1;
            changed = true;
        }
        while row.len > 0 && s.values[row.off + row.len - 1].abs() <= tol {
            dropped += s.values[row.off + row.len - 1];
            row.len -= 1;
            changed = true;
        }
        if row.len == 0 {
            row.start = 0;
        }
    }
    // empty boundary hyperplanes of the row box
    let m = s.lo.len();
    let mut keep_lo = vec![0usize; m];
    let mut keep_hi = s.ext.clone();
    let mut p = vec![0i64; m];
    for axis in 0..m {
        let mut occupied = vec![false; s.ext[axis]];
        for r in 0..s.rows.len() {
            if s.rows[r].len > 0 {
                s.prefix_coords(r, &mut p);
                occupied[(p[axis] - s.lo[axis]) as usize] = true;
            }
        }
        let first = occupied.iter().position(|o| *o).unwrap_or(0);
        let last = occupied.iter().rposition(|o| *o).map(|i| i + 1).unwrap_or(1);
        keep_lo[axis] = first;
        keep_hi[axis] = last;
    }
    let shrink = (0..m).any(|a| keep_lo[a] > 0 || keep_hi[a] < s.ext[a]);
    if !changed && !shrink {
        return dropped;
    }
    let new_lo: Vec<i64> = (0..m).map(|a| s.lo[a] + keep_lo[a] as i64).collect();
    let new_ext: Vec<usize> = (0..m).map(|a| keep_hi[a] - keep_lo[a]).collect();
    let mut rows = Vec::with_capacity(new_ext.iter().product());
    let mut values = Vec::with_capacity(s.values.len());
    for r in 0..s.rows.len() {
        s.prefix_coords(r, &mut p);
        if (0..m).any(|a| p[a] < new_lo[a] || p[a] >= new_lo[a] + new_ext[a] as i64) {
            continue;
        }
        let row = s.rows[r];
        rows.push(RowSpan { start: row.start, len: row.len, off: values.len() });
        values.extend_from_slice(&s.values[row.off..row.off + row.len]);
    }
    s.lo = new_lo;
    s.ext = new_ext;
    s.rows = rows;
    s.values = values;
    dropped
}


/// One report row; `cov` is the upper triangle `(0,0), (0,1), ..., (N-1,N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub mass: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl MomentRow {
    pub fn cov_at(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.mean.len();
        self.cov[i * n - i * (i + 1) / 2 + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub n: usize,
    pub rows: Vec<MomentRow>,
    pub leaked: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub steps: usize,
    pub mode: Mode,
    pub trim_tol: f64,
    pub domain: Option<Domain>,
    /// Emit a row every this many steps (the last step is always reported).
    pub report_every: usize,
}

pub fn run_scenario(ev: &Evolver<'_>, initial: Slice, opts: &RunOptions) -> Result<(MomentReport, Slice)> {
    let every = opts.report_every.max(1);
    let mut rows = vec![ev.moments(&initial)];
    let mut s = initial;
    let mut leaked = 0.0;
    for k in 1..=opts.steps {
        s = match opts.mode {
            Mode::Observable => ev.step_observable(&s)?,
            Mode::Distribution => {
                let (next, l) = ev.step_distribution(&s, opts.trim_tol, opts.domain.as_ref())?;
                leaked += l;
                next
            }
        };
        if k % every == 0 || k == opts.steps {
            rows.push(ev.moments(&s));
        }
    }
    Ok((MomentReport { n: ev.geom.n, rows, leaked }, s))
}

/// Number of steps of size `b` covering the horizon exactly.
pub fn steps_for(horizon: f64, b: f64) -> Result<usize> {
    let n = horizon / b;
    let r = libm::round(n);
    if (n - r).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Invalid(alloc::format!("horizon {horizon} is not a whole number of steps of {b}")));
    }
    Ok(r as usize)
}

/// Closed-form or moment-equation reference solutions.
#[derive(Debug, Clone, PartialEq)]
pub enum Analytic {
    /// Observable `exp(-x²/2s0²)` under pure diffusion.
    HeatKernel { h: f64, s0: f64, region: f64 },
    /// Same observable under the constant drift `-2γh`.
    SmoluchowskiConst { h: f64, gamma: f64, s0: f64, region: f64 },
    /// Distribution from a point mass at `x0` under `R = -2βx`.
    Ou { beta: f64, h: f64, x0: f64 },
    /// Phase-space point mass under `R = (y, c0 + c1 x - βy)` with velocity diffusion `h22`.
    KramersMoments { beta: f64, c0: f64, c1: f64, h22: f64, x0: f64, y0: f64 },
}

impl Analytic {
    pub fn drift(&self) -> DriftSpec {
        match self {
            Analytic::HeatKernel { .. } => DriftSpec::Free(1),
            Analytic::SmoluchowskiConst { h, gamma, .. } => DriftSpec::constant_force(*gamma, *h),
            Analytic::Ou { beta, .. } => DriftSpec::ou(*beta),
            Analytic::KramersMoments { beta, c0, c1, .. } => DriftSpec::kramers(*beta, &[*c0, *c1]),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Analytic::HeatKernel { .. } => "heat_kernel",
            Analytic::SmoluchowskiConst { .. } => "smoluchowski_const",
            Analytic::Ou { .. } => "ou",
            Analytic::KramersMoments { .. } => "kramers_moments",
        }
    }
}

/// Mean and full covariance (row-major) of a linear SDE `dz = (r0 + J z) dt + noise`, from a point start.
///
/// Classical RK4 on the moment equations with `steps` fixed steps.
pub fn linear_moments(r0: &[f64], jac: &[f64], diff: &[f64], z0: &[f64], horizon: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let n = r0.len();
    let rhs = |m: &[f64], c: &[f64], dm: &mut [f64], dc: &mut [f64]| {
        for i in 0..n {
            dm[i] = r0[i] + (0..n).map(|k| jac[i * n + k] * m[k]).sum::<f64>();
            for j in 0..n {
                let mut s = diff[i * n + j];
                for k in 0..n {
                    s += jac[i * n + k] * c[k * n + j] + c[i * n + k] * jac[j * n + k];
                }
                dc[i * n + j] = s;
            }
        }
    };
    let h = horizon / steps as f64;
    let mut m = z0.to_vec();
    let mut c = vec![0.0; n * n];
    let mut k = [(vec![0.0; n], vec![0.0; n * n]), (vec![0.0; n], vec![0.0; n * n]), (vec![0.0; n], vec![0.0; n * n]), (vec![0.0; n], vec![0.0; n * n])];
    let mut tm = vec![0.0; n];
    let mut tc = vec![0.0; n * n];
    for _ in 0..steps {
        for stage in 0..4 {
            let w = [0.0, 0.5, 0.5, 1.0][stage];
            for i in 0..n {
                tm[i] = m[i] + if stage == 0 { 0.0 } else { w * h * k[stage - 1].0[i] };
            }
            for i in 0..n * n {
                tc[i] = c[i] + if stage == 0 { 0.0 } else { w * h * k[stage - 1].1[i] };
            }
            let (dm, dc) = &mut k[stage];
            rhs(&tm, &tc, dm, dc);
        }
        for i in 0..n {
            m[i] += h / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
        }
        for i in 0..n * n {
            c[i] += h / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
        }
    }
    (m, c)
}

/// Largest relative deviation of lattice moments from reference moments.
///
/// Means are compared to their own size (or the standard deviation when
/// the mean is tiny); covariance entries are scaled by `sqrt(Σ_ii Σ_jj)`.
pub fn moment_error(row: &MomentRow, mean: &[f64], cov: &[f64]) -> f64 {
    let n = mean.len();
    let mut e: f64 = 0.0;
    for i in 0..n {
        let sd = libm::sqrt(cov[i * n + i]);
        let scale = if mean[i].abs() > 1e-12 * sd.max(1e-300) { mean[i].abs() } else { sd };
        e = e.max((row.mean[i] - mean[i]).abs() / scale);
        for j in i..n {
            let s = libm::sqrt(cov[i * n + i] * cov[j * n + j]);
            e = e.max((row.cov_at(i, j) - cov[i * n + j]).abs() / s);
        }
    }
    e
}

/// Settings shared by every grid point of a convergence run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeSetup {
    pub analytic: Analytic,
    pub horizon: f64,
    /// Distribution runs: domain box, clipped to the admissible intervals; defaults to those intervals in 1D.
    pub domain: Option<Domain>,
    pub trim_tol: f64,
}

/// Result of one grid point: error plus the lattice and reference moments when relevant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergePoint {
    pub eps: f64,
    pub error: f64,
    pub lattice: Option<MomentRow>,
    pub reference: Option<(Vec<f64>, Vec<f64>)>,
}

fn gaussian_obs(s0: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| libm::exp(-x[0] * x[0] / (2.0 * s0 * s0))
}

/// Evolves to the horizon at one scale and measures the error.
pub fn converge_point(family: &dyn ScalingFamily, setup: &ConvergeSetup, eps: f64, sched: &dyn Schedule) -> Result<ConvergePoint> {
    let chart = family.chart_at(eps)?;
    let spec = setup.analytic.drift();
    check_dim(family.n(), spec.n())?;
    let ev = Evolver::new(&chart, &spec, sched)?;
    let steps = steps_for(setup.horizon, chart.b())?;
    let t = setup.horizon;
    match &setup.analytic {
        Analytic::HeatKernel { h, s0, region } | Analytic::SmoluchowskiConst { h, s0, region, .. } => {
            let r = match &setup.analytic {
                Analytic::SmoluchowskiConst { gamma, .. } => -2.0 * gamma * h,
                _ => 0.0,
            };
            let reach = steps as f64 * chart.a()[0] + region;
            let (lo, ext) = ev.geom.covering_box(&[-reach], &[reach], 0);
            let ext: Vec<usize> = ext.iter().map(|e| e + steps).collect();
            let init = Slice::from_fn(&ev.geom, &lo, &ext, 0, gaussian_obs(*s0));
            let (_, fin) = run_scenario(&ev, init, &RunOptions { steps, mode: Mode::Observable, trim_tol: 0.0, domain: None, report_every: steps.max(1) })?;
            let var = s0 * s0 + h * t;
            let mut err: f64 = 0.0;
            let mut v = vec![0i64; 1];
            let mut x = vec![0.0; 1];
            for k in 0..fin.n_sites() {
                fin.coords(k, &mut v);
                ev.geom.position(&v, fin.layer, &mut x);
                if x[0].abs() <= *region {
                    let exact = s0 / libm::sqrt(var) * libm::exp(-(x[0] + r * t) * (x[0] + r * t) / (2.0 * var));
                    err = err.max((fin.values[k] - exact).abs());
                }
            }
            Ok(ConvergePoint { eps, error: err, lattice: None, reference: None })
        }
        Analytic::Ou { beta, h, x0 } => {
            let start = ev.geom.coords(&[*x0], 0)?;
            let dom = match &setup.domain {
                Some(d) => d.clone(),
                None => {
                    let b = ev.rule.admissible_bounds();
                    Domain { lo: vec![b[0].0], hi: vec![b[0].1] }
                }
            };
            ev.rule.check_box(&dom.lo, &dom.hi)?;
            let (rep, _) = run_scenario(&ev, Slice::delta(&start, 0), &RunOptions { steps, mode: Mode::Distribution, trim_tol: setup.trim_tol, domain: Some(dom), report_every: steps.max(1) })?;
            let row = rep.rows.last().cloned().expect("initial row");
            let (m, c) = linear_moments(&[0.0], &[-2.0 * beta], &[*h], &[*x0], t, 20_000);
            Ok(ConvergePoint { eps, error: moment_error(&row, &m, &c), lattice: Some(row), reference: Some((m, c)) })
        }
        Analytic::KramersMoments { beta, c0, c1, h22, x0, y0 } => {
            let (start, pos) = ev.geom.nearest(&[*x0, *y0], 0);
            let dom = setup.domain.clone().ok_or_else(|| Error::Invalid("phase-space runs need an explicit domain".into()))?;
            // Box corners can leave the admissible set at coarse ε without any
            // mass ever reaching them, so leaks are caught during the run.
            let dom = dom.clipped(&ev.rule.admissible_bounds());
            let (rep, _) = run_scenario(&ev, Slice::delta(&start, 0), &RunOptions { steps, mode: Mode::Distribution, trim_tol: setup.trim_tol, domain: Some(dom), report_every: steps.max(1) })?;
            let row = rep.rows.last().cloned().expect("initial row");
            let (m, c) = linear_moments(&[0.0, *c0], &[0.0, 1.0, *c1, -beta], &[0.0, 0.0, 0.0, *h22], &pos, t, 20_000);
            Ok(ConvergePoint { eps, error: moment_error(&row, &m, &c), lattice: Some(row), reference: Some((m, c)) })
        }
    }
}

/// One row of a convergence table; `order` is empty on the first row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub eps: f64,
    pub error: f64,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergeRow>,
    /// Indices `k` where `error[k] >= error[k-1]`.
    pub non_monotone: Vec<usize>,
}

/// Empirical orders `log(e_{k-1}/e_k) / log(ε_{k-1}/ε_k)` along the grid.
pub fn assemble_table(points: &[(f64, f64)]) -> ConvergenceTable {
    let mut rows = Vec::with_capacity(points.len());
    let mut non_monotone = Vec::new();
    for (k, &(eps, error)) in points.iter().enumerate() {
        let order = if k == 0 {
            None
        } else {
            let (pe, perr) = points[k - 1];
            if error >= perr {
                non_monotone.push(k);
            }
            Some(libm::log(perr / error) / libm::log(pe / eps))
        };
        rows.push(ConvergeRow { eps, error, order });
    }
    ConvergenceTable { rows, non_monotone }
}

pub fn converge(family: &dyn ScalingFamily, setup: &ConvergeSetup, eps_grid: &[f64], sched: &dyn Schedule) -> Result<ConvergenceTable> {
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("ε grid must be nonempty and strictly decreasing".into()));
    }
    let mut pts = Vec::with_capacity(eps_grid.len());
    for &e in eps_grid {
        pts.push((e, converge_point(family, setup, e, sched)?.error));
    }
    Ok(assemble_table(&pts))
}

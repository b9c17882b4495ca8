//! Approximation operators at scale `h`: projection, interpolation,
//! smoothing, synthesis from coefficients, and difference operators.
//!
//! Grid-based operators require the grid step `δ` to divide `h` and the
//! kernel knots to land on grid nodes, so every quadrature panel sits inside
//! a single polynomial piece.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dfilter::{self, DiscreteFilter};
use crate::error::{invalid, Error, Result};
use crate::kernel::{AxisPoly, PiecewisePolyKernel};
use crate::multiindex;
use crate::poly::binomial;
use crate::quad::{gauss_legendre_unit, product_weights};
use crate::signals::Signal;
use crate::spaces::{weighted_sequence_norm, GridField, GridGeometry, GridSignal, LazyGrid, WeightSign};

/// Largest block of panels the analysis rule interpolates `f` over.
const ANALYSIS_BLOCK: usize = 8;

/// Minimum number of mollifier nodes with nonzero weight.
pub const MIN_MOLLIFIER_NODES: usize = 16;

/// Minimum grid refinement `h / δ` for projection.
pub const MIN_REFINEMENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Projection,
    Interpolation,
    Manual,
}

/// Dense array over an integer box, first axis slowest.
#[derive(Debug, Clone, PartialEq)]
struct Lattice {
    lo: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Lattice {
    fn zeros(lo: Vec<i64>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Lattice {
            lo,
            shape,
            values: vec![0.0; len],
        }
    }

    fn hi(&self, axis: usize) -> i64 {
        self.lo[axis] + self.shape[axis] as i64 - 1
    }

    fn offset(&self, k: &[i64]) -> Option<usize> {
        let mut flat = 0;
        for ((&ki, &lo), &n) in k.iter().zip(&self.lo).zip(&self.shape) {
            let i = ki - lo;
            if i < 0 || i >= n as i64 {
                return None;
            }
            flat = flat * n + i as usize;
        }
        Some(flat)
    }

    fn index(&self, mut flat: usize) -> Vec<i64> {
        let mut out = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            out[axis] = self.lo[axis] + (flat % self.shape[axis]) as i64;
            flat /= self.shape[axis];
        }
        out
    }

    /// Valid part of the convolution with a one-dimensional filter along `axis`.
    fn convolve_axis(&self, axis: usize, filter: &DiscreteFilter) -> Result<Lattice> {
        let (a, b) = filter.support_box()[0];
        let taps: Vec<(i64, f64)> = filter.entries().map(|(k, v)| (k[0], v)).collect();
        let lo_out = self.lo[axis] + b;
        let hi_out = self.hi(axis) + a;
        if hi_out < lo_out {
            return Err(invalid("support", "coefficient box smaller than the filter support"));
        }
        let mut lo = self.lo.clone();
        lo[axis] = lo_out;
        let mut shape = self.shape.clone();
        shape[axis] = (hi_out - lo_out + 1) as usize;
        let mut out = Lattice::zeros(lo, shape);
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let n_in = self.shape[axis];
        let n_out = out.shape[axis];
        for o in 0..outer {
            for i in 0..inner {
                for kk in 0..n_out {
                    let k = lo_out + kk as i64;
                    let mut acc = 0.0;
                    for &(n, v) in &taps {
                        let src = (k - n - self.lo[axis]) as usize;
                        acc += v * self.values[(o * n_in + src) * inner + i];
                    }
                    out.values[(o * n_out + kk) * inner + i] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Valid part of the convolution with `filter`, per axis when separable.
    fn convolve(&self, filter: &DiscreteFilter) -> Result<Lattice> {
        let dim = self.shape.len();
        if filter.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: filter.dim(),
            });
        }
        if dim == 1 {
            return self.convolve_axis(0, filter);
        }
        if let Some(factors) = filter.factors() {
            let mut out = self.clone();
            for (axis, f) in factors.iter().enumerate() {
                out = out.convolve_axis(axis, f)?;
            }
            return Ok(out);
        }
        let support = filter.support_box();
        let mut lo = Vec::with_capacity(dim);
        let mut shape = Vec::with_capacity(dim);
        for (axis, &(a, b)) in support.iter().enumerate() {
            let l = self.lo[axis] + b;
            let h = self.hi(axis) + a;
            if h < l {
                return Err(invalid("support", "coefficient box smaller than the filter support"));
            }
            lo.push(l);
            shape.push((h - l + 1) as usize);
        }
        let mut out = Lattice::zeros(lo, shape);
        let taps: Vec<(&Vec<i64>, f64)> = filter.entries().collect();
        for flat in 0..out.values.len() {
            let k = out.index(flat);
            let mut acc = 0.0;
            for (n, v) in &taps {
                let src: Vec<i64> = k.iter().zip(n.iter()).map(|(a, b)| a - b).collect();
                acc += v * self.values[self.offset(&src).expect("valid region")];
            }
            out.values[flat] = acc;
        }
        Ok(out)
    }
}

/// Coefficients `c[k]` of `Σ c[k] φ(x/h - k)` over an integer box.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    h: f64,
    kernel: PiecewisePolyKernel,
    provenance: Provenance,
    data: Lattice,
}

impl CoefficientField {
    /// Field over the box `support` (inclusive per axis) with values from `f`.
    pub fn from_fn(
        kernel: &PiecewisePolyKernel,
        h: f64,
        support: &[(i64, i64)],
        f: impl Fn(&[i64]) -> f64,
    ) -> Result<Self> {
        if support.len() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                actual: support.len(),
            });
        }
        if !(h > 0.0) {
            return Err(invalid("h", "scale must be positive"));
        }
        if support.iter().any(|(lo, hi)| hi < lo) {
            return Err(invalid("support", "empty coefficient box"));
        }
        let lo = support.iter().map(|s| s.0).collect();
        let shape = support.iter().map(|s| (s.1 - s.0 + 1) as usize).collect();
        let mut data = Lattice::zeros(lo, shape);
        for flat in 0..data.values.len() {
            data.values[flat] = f(&data.index(flat));
        }
        Ok(CoefficientField {
            h,
            kernel: kernel.clone(),
            provenance: Provenance::Manual,
            data,
        })
    }

    fn from_lattice(kernel: &PiecewisePolyKernel, h: f64, data: Lattice, provenance: Provenance) -> Self {
        CoefficientField {
            h,
            kernel: kernel.clone(),
            provenance,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &PiecewisePolyKernel {
        &self.kernel
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Inclusive index box per axis.
    pub fn support(&self) -> Vec<(i64, i64)> {
        (0..self.dim()).map(|a| (self.data.lo[a], self.data.hi(a))).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data.values
    }

    pub fn get(&self, k: &[i64]) -> Option<f64> {
        self.data.offset(k).map(|i| self.data.values[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.data.values.iter().enumerate().map(|(i, &v)| (self.data.index(i), v))
    }

    /// `ℓ_{p,±alpha}` norm with weight `⟨h k⟩^{±alpha}`.
    pub fn sequence_norm(&self, p: f64, alpha: f64, sign: WeightSign) -> f64 {
        let entries: Vec<(Vec<i64>, f64)> = self.entries().collect();
        weighted_sequence_norm(entries.iter().map(|(k, v)| (k.as_slice(), *v)), self.h, p, alpha, sign)
    }

    /// Coefficient range needed along `axis` for points in `[a, b]`.
    fn needed(&self, axis: usize, a: f64, b: f64) -> (i64, i64) {
        let (lo, hi) = self.kernel.axis(axis).support();
        // φ(x/h - k) can be nonzero only for x/h - hi < k <= x/h - lo
        let first = (a / self.h - hi).floor() as i64 + 1;
        let last = (b / self.h - lo).floor() as i64;
        (first, last)
    }

    /// Whether synthesis is defined on all of `[-half_width, half_width]^d`.
    pub fn covers(&self, half_width: f64) -> bool {
        (0..self.dim()).all(|axis| {
            let (first, last) = self.needed(axis, -half_width, half_width);
            first >= self.data.lo[axis] && last <= self.data.hi(axis)
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "h": self.h,
            "support": self.support().iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
            "values": self.data.values,
            "provenance": self.provenance,
        })
    }

    pub fn from_json(value: &serde_json::Value, kernel: &PiecewisePolyKernel) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            h: f64,
            support: Vec<[i64; 2]>,
            values: Vec<f64>,
            provenance: Provenance,
        }
        let doc: Doc =
            serde_json::from_value(value.clone()).map_err(|e| invalid("coefficients", e.to_string()))?;
        let support: Vec<(i64, i64)> = doc.support.iter().map(|s| (s[0], s[1])).collect();
        let mut out = Self::from_fn(kernel, doc.h, &support, |_| 0.0)?;
        if out.data.values.len() != doc.values.len() {
            return Err(Error::DimensionMismatch {
                expected: out.data.values.len(),
                actual: doc.values.len(),
            });
        }
        out.data.values = doc.values;
        out.provenance = doc.provenance;
        Ok(out)
    }
}

/// `Σ_k c[k] φ(x/h - k)`; refuses points whose terms leave the stored box.
pub fn synthesize(c: &CoefficientField, x: &[f64]) -> Result<f64> {
    let dim = c.dim();
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.len(),
        });
    }
    let mut per_axis: Vec<Vec<(i64, f64)>> = Vec::with_capacity(dim);
    for (axis, &xi) in x.iter().enumerate() {
        let (first, last) = c.needed(axis, xi, xi);
        if first < c.data.lo[axis] || last > c.data.hi(axis) {
            let index = x
                .iter()
                .enumerate()
                .map(|(a, &v)| if a == axis { if first < c.data.lo[a] { first } else { last } } else { (v / c.h).floor() as i64 })
                .collect();
            return Err(Error::OutsideSupport {
                point: x.to_vec(),
                index,
            });
        }
        let axis_poly = c.kernel.axis(axis);
        per_axis.push(
            (first..=last)
                .map(|k| (k, axis_poly.eval(xi / c.h - k as f64)))
                .filter(|(_, v)| *v != 0.0)
                .collect(),
        );
    }
    let mut total = 0.0;
    let mut k = vec![0i64; dim];
    tensor_sum(&per_axis, 0, 1.0, &mut k, &mut |k, w| {
        total += w * c.data.values[c.data.offset(k).expect("checked range")];
    });
    Ok(total)
}

fn tensor_sum(per_axis: &[Vec<(i64, f64)>], axis: usize, w: f64, k: &mut Vec<i64>, f: &mut dyn FnMut(&[i64], f64)) {
    if axis == per_axis.len() {
        f(k, w);
        return;
    }
    for &(ki, vi) in &per_axis[axis] {
        k[axis] = ki;
        tensor_sum(per_axis, axis + 1, w * vi, k, f);
    }
}

/// Kernel values at the fine-grid phases `p / m`, `p = 0..m`.
#[derive(Debug, Clone)]
struct PhaseTable {
    m: usize,
    /// Per phase: `(j, φ(p/m + j))` with nonzero value.
    entries: Vec<Vec<(i64, f64)>>,
}

impl PhaseTable {
    fn new(axis: &AxisPoly, m: usize) -> Self {
        let (lo, hi) = axis.support();
        let entries = (0..m)
            .map(|p| {
                let t = p as f64 / m as f64;
                let first = (lo - t).ceil() as i64;
                let mut row = Vec::new();
                let mut j = first;
                while t + (j as f64) < hi {
                    let v = axis.eval(t + j as f64);
                    if v != 0.0 {
                        row.push((j, v));
                    }
                    j += 1;
                }
                row
            })
            .collect();
        PhaseTable { m, entries }
    }

    /// `(k, φ(i/m - k))` for a node `i` counted from the origin.
    fn contributions(&self, i: i64) -> impl Iterator<Item = (i64, f64)> + '_ {
        let q = i.div_euclid(self.m as i64);
        let p = i.rem_euclid(self.m as i64) as usize;
        self.entries[p].iter().map(move |&(j, v)| (q - j, v))
    }
}

fn refinement(h: f64, step: f64) -> Result<usize> {
    let r = h / step;
    let m = r.round();
    if m < 1.0 || (r - m).abs() > 1e-9 * m {
        return Err(Error::Misaligned(format!("h = {h} is not a multiple of the grid step {step}")));
    }
    Ok(m as usize)
}

fn origin_offset(g: &GridGeometry) -> Result<i64> {
    let r = g.half_width / g.step;
    let n = r.round();
    if (r - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Misaligned("the origin is not a grid node".into()));
    }
    Ok(n as i64)
}

/// Synthesized values on `geometry`, produced row by row.
pub fn synthesize_grid<'a>(c: &'a CoefficientField, geometry: GridGeometry) -> Result<LazyGrid<'a>> {
    let dim = c.dim();
    if geometry.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: geometry.dim,
        });
    }
    let m = refinement(c.h, geometry.step)?;
    let origin = origin_offset(&geometry)?;
    if !c.covers(geometry.half_width) {
        let x = vec![geometry.half_width; dim];
        return Err(Error::OutsideSupport {
            point: x,
            index: (0..dim).map(|a| c.needed(a, geometry.half_width, geometry.half_width).1).collect(),
        });
    }
    let tables: Vec<PhaseTable> = (0..dim).map(|a| PhaseTable::new(c.kernel.axis(a), m)).collect();
    let last = dim - 1;
    let n_last = c.data.shape[last];
    let lo_last = c.data.lo[last];
    Ok(LazyGrid::new(geometry, move |row, out| {
        // contract the leading axes into a line of coefficients
        let mut line = vec![0.0; n_last];
        let mut rem = row;
        let mut lead = vec![0i64; last];
        for axis in (0..last).rev() {
            lead[axis] = (rem % geometry.n) as i64 - origin;
            rem /= geometry.n;
        }
        let per_axis: Vec<Vec<(i64, f64)>> = lead
            .iter()
            .zip(&tables)
            .map(|(&i, t)| t.contributions(i).collect())
            .collect();
        let mut k = vec![0i64; last];
        tensor_sum(&per_axis, 0, 1.0, &mut k, &mut |k, w| {
            let mut start = 0;
            for (a, &ka) in k.iter().enumerate() {
                start = start * c.data.shape[a] + (ka - c.data.lo[a]) as usize;
            }
            let base = start * n_last;
            for (l, v) in line.iter_mut().zip(&c.data.values[base..base + n_last]) {
                *l += w * v;
            }
        });
        let table = &tables[last];
        for (j, o) in out.iter_mut().enumerate() {
            let i = j as i64 - origin;
            *o = table
                .contributions(i)
                .map(|(k, v)| v * line[(k - lo_last) as usize])
                .sum();
        }
    }))
}

/// Per-piece Simpson weights `φ_j(q/m) w_q / m` and grid offsets of the knots.
struct AnalysisRule {
    knot_offsets: Vec<i64>,
    piece_weights: Vec<Vec<f64>>,
}

impl AnalysisRule {
    fn new(axis: &AxisPoly, m: usize) -> Result<Self> {
        let mut knot_offsets = Vec::with_capacity(axis.knots.len());
        for &t in &axis.knots {
            let v = t * m as f64;
            let r = v.round();
            if (v - r).abs() > 1e-9 {
                return Err(Error::Misaligned(format!("knot {t} is not on the grid for refinement {m}")));
            }
            knot_offsets.push(r as i64);
        }
        let mut piece_weights = Vec::with_capacity(axis.pieces());
        for j in 0..axis.pieces() {
            let len = (knot_offsets[j + 1] - knot_offsets[j]) as usize;
            if len < 2 {
                return Err(Error::Misaligned("kernel piece narrower than two panels".into()));
            }
            let rho = |u: f64| axis.piece_value(j, u / m as f64) / m as f64;
            piece_weights.push(product_weights(&rho, axis.degree(), len, ANALYSIS_BLOCK));
        }
        Ok(AnalysisRule {
            knot_offsets,
            piece_weights,
        })
    }

    /// Coefficient range whose analysis integral stays inside `n` nodes.
    fn range(&self, m: usize, origin: i64, n: usize) -> (i64, i64) {
        let first_knot = self.knot_offsets[0];
        let last_knot = *self.knot_offsets.last().unwrap();
        let m = m as i64;
        let lo = (-origin - first_knot).div_euclid(m) + i64::from((-origin - first_knot).rem_euclid(m) != 0);
        let hi = (n as i64 - 1 - origin - last_knot).div_euclid(m);
        (lo, hi)
    }

    /// `s[k] = Σ_j Σ_q w_j[q] f[k m + o_j + origin + q]` for `k` in `lo..=hi`.
    fn analyze_line(&self, f: &[f64], m: usize, origin: i64, lo: i64, hi: i64, out: &mut [f64]) {
        for (slot, k) in out.iter_mut().zip(lo..=hi) {
            let mut acc = 0.0;
            for (j, w) in self.piece_weights.iter().enumerate() {
                let start = (k * m as i64 + self.knot_offsets[j] + origin) as usize;
                acc += w.iter().zip(&f[start..start + w.len()]).map(|(a, b)| a * b).sum::<f64>();
            }
            *slot = acc;
        }
    }

    /// For every node, the `(k, weight)` pairs it contributes to.
    fn node_lists(&self, m: usize, origin: i64, lo: i64, hi: i64, n: usize) -> Vec<Vec<(i64, f64)>> {
        let mut lists = vec![Vec::new(); n];
        for k in lo..=hi {
            for (j, w) in self.piece_weights.iter().enumerate() {
                let start = (k * m as i64 + self.knot_offsets[j] + origin) as usize;
                for (q, &wq) in w.iter().enumerate() {
                    if wq != 0.0 {
                        lists[start + q].push((k, wq));
                    }
                }
            }
        }
        lists
    }
}

/// Analysis samples `s[k] = h^{-d} ∫ f(y) φ(y/h - k) dy` by aligned product quadrature.
pub fn analysis_samples(f: &dyn GridField, kernel: &PiecewisePolyKernel, h: f64) -> Result<CoefficientField> {
    let g = *f.geometry();
    let dim = kernel.dim();
    if g.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: g.dim,
        });
    }
    let m = refinement(h, g.step)?;
    if m < MIN_REFINEMENT {
        return Err(Error::Misaligned(format!("refinement h/δ = {m} is below {MIN_REFINEMENT}")));
    }
    let origin = origin_offset(&g)?;
    let rules = (0..dim)
        .map(|a| AnalysisRule::new(kernel.axis(a), m))
        .collect::<Result<Vec<_>>>()?;
    let ranges: Vec<(i64, i64)> = rules.iter().map(|r| r.range(m, origin, g.n)).collect();
    if ranges.iter().any(|(lo, hi)| hi < lo) {
        return Err(invalid("window", "signal window narrower than the scaled kernel support"));
    }
    let lo: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let shape: Vec<usize> = ranges.iter().map(|r| (r.1 - r.0 + 1) as usize).collect();
    let mut out = Lattice::zeros(lo, shape.clone());
    let last = dim - 1;
    let n_last = shape[last];
    let mut row_buf = vec![0.0; g.n];
    let mut line = vec![0.0; n_last];
    if dim == 1 {
        f.fill_row(0, &mut row_buf);
        rules[0].analyze_line(&row_buf, m, origin, ranges[0].0, ranges[0].1, &mut out.values);
    } else {
        let lists: Vec<Vec<Vec<(i64, f64)>>> = (0..last)
            .map(|a| rules[a].node_lists(m, origin, ranges[a].0, ranges[a].1, g.n))
            .collect();
        let mut idx = vec![0usize; last];
        for row in 0..g.rows() {
            let mut rem = row;
            for axis in (0..last).rev() {
                idx[axis] = rem % g.n;
                rem /= g.n;
            }
            if idx.iter().zip(&lists).any(|(&i, l)| l[i].is_empty()) {
                continue;
            }
            f.fill_row(row, &mut row_buf);
            rules[last].analyze_line(&row_buf, m, origin, ranges[last].0, ranges[last].1, &mut line);
            let per_axis: Vec<Vec<(i64, f64)>> = idx.iter().zip(&lists).map(|(&i, l)| l[i].clone()).collect();
            let mut k = vec![0i64; last];
            tensor_sum(&per_axis, 0, 1.0, &mut k, &mut |k, w| {
                let mut start = 0;
                for (a, &ka) in k.iter().enumerate() {
                    start = start * shape[a] + (ka - out.lo[a]) as usize;
                }
                let base = start * n_last;
                for (o, v) in out.values[base..base + n_last].iter_mut().zip(&line) {
                    *o += w * v;
                }
            });
        }
    }
    Ok(CoefficientField::from_lattice(kernel, h, out, Provenance::Manual))
}

/// Orthogonal projection onto the scaled shift-invariant space.
pub fn project(f: &dyn GridField, kernel: &PiecewisePolyKernel, h: f64) -> Result<CoefficientField> {
    let q = dfilter::dual_filter(kernel, dfilter::DEFAULT_GRID)?;
    project_with_filter(f, kernel, h, &q)
}

/// Projection with a precomputed dual filter `q`.
pub fn project_with_filter(
    f: &dyn GridField,
    kernel: &PiecewisePolyKernel,
    h: f64,
    q: &DiscreteFilter,
) -> Result<CoefficientField> {
    let s = analysis_samples(f, kernel, h)?;
    let c = s.data.convolve(q)?;
    Ok(CoefficientField::from_lattice(kernel, h, c, Provenance::Projection))
}

/// Interpolation `c = f(h·) * a` from grid samples.
pub fn interpolate(f: &dyn GridField, kernel: &PiecewisePolyKernel, h: f64) -> Result<CoefficientField> {
    let a = dfilter::interpolation_prefilter(kernel, dfilter::DEFAULT_GRID)?;
    interpolate_with_filter(f, kernel, h, &a)
}

pub fn interpolate_with_filter(
    f: &dyn GridField,
    kernel: &PiecewisePolyKernel,
    h: f64,
    a: &DiscreteFilter,
) -> Result<CoefficientField> {
    let g = *f.geometry();
    let dim = kernel.dim();
    if g.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: g.dim,
        });
    }
    let m = refinement(h, g.step)? as i64;
    let origin = origin_offset(&g)?;
    let kmax = origin / m;
    let side = (2 * kmax + 1) as usize;
    let mut samples = Lattice::zeros(vec![-kmax; dim], vec![side; dim]);
    let mut row_buf = vec![0.0; g.n];
    let lead_count = side.pow(dim as u32 - 1);
    for r in 0..lead_count {
        let mut rem = r;
        let mut grid_idx = vec![0usize; dim - 1];
        for axis in (0..dim - 1).rev() {
            let k = (rem % side) as i64 - kmax;
            rem /= side;
            grid_idx[axis] = (origin + k * m) as usize;
        }
        f.fill_row(g.row_index(&grid_idx), &mut row_buf);
        for j in 0..side {
            let k = j as i64 - kmax;
            samples.values[r * side + j] = row_buf[(origin + k * m) as usize];
        }
    }
    let c = samples.convolve(a)?;
    Ok(CoefficientField::from_lattice(kernel, h, c, Provenance::Interpolation))
}

/// Interpolation from point evaluations of a signal on `[-half_width, half_width]^d`.
pub fn interpolate_signal(
    f: &dyn Signal,
    kernel: &PiecewisePolyKernel,
    h: f64,
    half_width: f64,
    a: &DiscreteFilter,
) -> Result<CoefficientField> {
    let dim = kernel.dim();
    let kmax = (half_width / h + 1e-9).floor() as i64;
    let side = (2 * kmax + 1) as usize;
    let mut samples = Lattice::zeros(vec![-kmax; dim], vec![side; dim]);
    for flat in 0..samples.values.len() {
        let x: Vec<f64> = samples.index(flat).iter().map(|&k| k as f64 * h).collect();
        samples.values[flat] = f.value(&x);
    }
    let c = samples.convolve(a)?;
    Ok(CoefficientField::from_lattice(kernel, h, c, Provenance::Interpolation))
}

/// Normalized bump `c exp(-1 / (1 - r²))`, `r = ‖u - center‖ / radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    /// Common center coordinate on every axis.
    pub center: f64,
    pub radius: f64,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        MollifierSpec {
            center: 0.0,
            radius: 1.0,
        }
    }
}

impl MollifierSpec {
    /// Bump on `[0, 1]^d`: its odd moments do not vanish.
    pub fn one_sided() -> Self {
        MollifierSpec {
            center: 0.5,
            radius: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.center.abs() + self.radius > 1.0 + 1e-15 {
            return Err(invalid("mollifier", "support must lie inside [-1, 1]^d"));
        }
        Ok(())
    }

    fn profile(&self, u: &[f64]) -> f64 {
        let r2: f64 = u.iter().map(|v| ((v - self.center) / self.radius).powi(2)).sum();
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }

    /// `∫ exp(-1/(1-r²))` over the unit ball of `R^dim`, by panelled Gauss-Legendre.
    fn unit_mass(dim: usize) -> f64 {
        let (x, w) = gauss_legendre_unit(20);
        let panels = 64;
        let mut radial = 0.0;
        for p in 0..panels {
            let a = p as f64 / panels as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let r = a + xi / panels as f64;
                radial += wi / panels as f64 * (-1.0 / (1.0 - r * r)).exp() * r.powi(dim as i32 - 1);
            }
        }
        let sphere = match dim {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            3 => 4.0 * std::f64::consts::PI,
            _ => {
                // S_{d-1} = 2 π^{d/2} / Γ(d/2)
                let mut s = if dim % 2 == 0 { 2.0 * std::f64::consts::PI } else { 2.0 };
                let mut k = if dim % 2 == 0 { 2 } else { 1 };
                while k + 2 <= dim {
                    s *= 2.0 * std::f64::consts::PI / k as f64;
                    k += 2;
                }
                s
            }
        };
        sphere * radial
    }

    /// Normalization constant `c` such that `∫ χ = 1`.
    pub fn normalization(&self, dim: usize) -> f64 {
        1.0 / (Self::unit_mass(dim) * self.radius.powi(dim as i32))
    }

    /// Normalized density `χ(u)`.
    pub fn density(&self, u: &[f64]) -> f64 {
        self.normalization(u.len()) * self.profile(u)
    }
}

/// Smoothing `J_h f = f * ψ_h`, `ψ_h = Σ_n (-1)^{n-1} C(L,n) (nh)^{-d} χ(·/(nh))`.
///
/// The mollifier is discretized on the nodes `u = q/m`, `m = h/δ`, so every
/// dilation `n h u` is a whole number of grid steps. The result lives on the
/// input window shrunk by `L h`.
pub fn smooth(f: &GridSignal, h: f64, order: usize, chi: &MollifierSpec) -> Result<GridSignal> {
    chi.validate()?;
    if order == 0 {
        return Err(invalid("order", "smoothing order must be positive"));
    }
    let g = *f.geometry();
    let dim = g.dim;
    let m = refinement(h, g.step)?;
    let mi = m as i64;
    let nodes: Vec<Vec<i64>> = multiindex::lattice_box(dim, mi);
    let mut weights: Vec<(Vec<i64>, f64)> = nodes
        .into_iter()
        .map(|q| {
            let u: Vec<f64> = q.iter().map(|&v| v as f64 / m as f64).collect();
            let w = chi.profile(&u);
            (q, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    if weights.len() < MIN_MOLLIFIER_NODES {
        return Err(Error::Unresolved {
            points: weights.len(),
            required: MIN_MOLLIFIER_NODES,
        });
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.iter_mut().for_each(|(_, w)| *w /= total);

    let shrink = order as f64 * h;
    if shrink >= g.half_width {
        return Err(invalid("h", "window too small for the smoothing stencil"));
    }
    let out_geom = g.shrink(g.half_width - shrink)?;
    let offset = order * m;
    // combined stencil: shift n·q with coefficient (-1)^{n-1} C(L,n) w_q
    let mut stencil: Vec<(Vec<i64>, f64)> = Vec::new();
    for n in 1..=order {
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let c = sign * binomial(order, n);
        for (q, w) in &weights {
            stencil.push((q.iter().map(|v| v * n as i64).collect(), c * w));
        }
    }
    let mut values = Vec::with_capacity(out_geom.len());
    let stride: Vec<usize> = (0..dim).map(|a| g.n.pow((dim - 1 - a) as u32)).collect();
    let flat_shift: Vec<(isize, f64)> = stencil
        .iter()
        .map(|(s, w)| {
            let shift: isize = s.iter().zip(&stride).map(|(&si, &st)| si as isize * st as isize).sum();
            (-shift, *w)
        })
        .collect();
    for flat in 0..out_geom.len() {
        let idx = out_geom.unflatten(flat);
        let center: usize = idx.iter().zip(&stride).map(|(&i, &st)| (i + offset) * st).sum();
        let acc: f64 = flat_shift
            .iter()
            .map(|&(s, w)| w * f.values()[(center as isize + s) as usize])
            .sum();
        values.push(acc);
    }
    let mut out = GridSignal::from_values(out_geom, values, format!("smoothed, order {order}, h = {h}"))?;
    if let Some(growth) = f.growth() {
        out = out.with_growth(growth);
    }
    Ok(out)
}

/// `Δ_u^L f(x) = Σ_n (-1)^n C(L,n) f(x - n u)`.
pub fn finite_difference(f: &dyn Fn(&[f64]) -> f64, u: &[f64], order: usize, x: &[f64]) -> f64 {
    (0..=order)
        .map(|n| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let y: Vec<f64> = x.iter().zip(u).map(|(xi, ui)| xi - n as f64 * ui).collect();
            sign * binomial(order, n) * f(&y)
        })
        .sum()
}

/// `D_u^L f(x) = Σ_{|l|=L} (L! / l!) u^l ∂^l f(x)`.
pub fn directional_derivative(f: &dyn Signal, u: &[f64], order: usize, x: &[f64]) -> Result<f64> {
    if u.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: u.len(),
        });
    }
    if order > f.max_order() {
        return Err(Error::MissingPartials {
            requested: order,
            available: f.max_order(),
        });
    }
    let partials = f.partials(order, x)?;
    Ok(multiindex::with_order(f.dim(), order)
        .iter()
        .zip(&partials)
        .map(|(l, d)| {
            let mono: f64 = l.iter().zip(u).map(|(&li, &ui)| ui.powi(li as i32)).product();
            multiindex::multinomial(l) * mono * d
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{bspline, tensor_product};
    use crate::signals::{make_exp_sin, make_polynomial};
    use std::sync::Arc;

    #[test]
    fn delta_coefficients_give_the_kernel() {
        let b = bspline(4).unwrap();
        let c = CoefficientField::from_fn(&b, 1.0, &[(-5, 5)], |k| if k[0] == 0 { 1.0 } else { 0.0 }).unwrap();
        for &x in &[0.0, 0.5, 1.7, 2.0, 3.9] {
            assert!((synthesize(&c, &[x]).unwrap() - b.eval(&[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_of_unity_and_linear_reproduction() {
        let b = bspline(4).unwrap().centered();
        let ones = CoefficientField::from_fn(&b, 0.5, &[(-20, 20)], |_| 1.0).unwrap();
        let ramp = CoefficientField::from_fn(&b, 1.0, &[(-20, 20)], |k| k[0] as f64).unwrap();
        for i in 0..50 {
            let x = -4.0 + 0.17 * i as f64;
            assert!((synthesize(&ones, &[x]).unwrap() - 1.0).abs() < 1e-14);
            assert!((synthesize(&ramp, &[x]).unwrap() - x).abs() < 1e-13);
        }
        assert!(matches!(synthesize(&ramp, &[19.5]), Err(Error::OutsideSupport { .. })));
    }

    #[test]
    fn grid_synthesis_matches_pointwise() {
        let b = bspline(3).unwrap().centered();
        let t = tensor_product(&[b.clone(), b]).unwrap();
        let c = CoefficientField::from_fn(&t, 0.25, &[(-20, 20), (-20, 20)], |k| {
            ((k[0] * 3 + k[1] * 7) % 5) as f64 - 2.0
        })
        .unwrap();
        let g = GridGeometry::new(2, 4.0, 0.25 / 8.0).unwrap();
        let lazy = synthesize_grid(&c, g).unwrap();
        let mut row = vec![0.0; g.n];
        for r in [0usize, 17, 128, 256] {
            lazy.fill_row(r, &mut row);
            let y = g.node(r);
            for j in (0..g.n).step_by(13) {
                let direct = synthesize(&c, &[y, g.node(j)]).unwrap();
                assert!((row[j] - direct).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn projection_of_constant_and_zero() {
        let b = bspline(4).unwrap().centered();
        let g = GridGeometry::new(1, 16.0, 1.0 / 64.0).unwrap();
        let one = GridSignal::from_fn(g, |_| 1.0, "one").unwrap();
        let c = project(&one, &b, 0.125).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let zero = GridSignal::from_fn(g, |_| 0.0, "zero").unwrap();
        assert!(project(&zero, &b, 0.125).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(matches!(project(&one, &b, 0.1), Err(Error::Misaligned(_))));
        assert!(matches!(project(&one, &b, 1.0 / 32.0), Err(Error::Misaligned(_))));
    }

    #[test]
    fn interpolation_hits_samples() {
        let b = bspline(4).unwrap().centered();
        let s = Arc::new(make_exp_sin(1).unwrap());
        let g = GridGeometry::new(1, 16.0, 1.0 / 64.0).unwrap();
        let f = GridSignal::from_signal(s.clone(), g).unwrap();
        let c = interpolate(&f, &b, 0.25).unwrap();
        for k in -32..=32 {
            let x = k as f64 * 0.25;
            assert!((synthesize(&c, &[x]).unwrap() - s.value(&[x])).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_keeps_constants_and_refuses_coarse_grids() {
        let g = GridGeometry::new(1, 4.0, 1.0 / 32.0).unwrap();
        let f = GridSignal::from_fn(g, |_| 3.0, "three").unwrap();
        let j = smooth(&f, 0.5, 3, &MollifierSpec::default()).unwrap();
        assert!(j.values().iter().all(|v| (v - 3.0).abs() < 1e-13));
        assert_eq!(j.geometry().half_width, 2.5);
        assert!(matches!(
            smooth(&f, 1.0 / 16.0, 2, &MollifierSpec::default()),
            Err(Error::Unresolved { .. })
        ));
    }

    #[test]
    fn smoothing_keeps_lines_with_even_mollifier() {
        let g = GridGeometry::new(1, 4.0, 1.0 / 32.0).unwrap();
        let f = GridSignal::from_fn(g, |x| 2.0 * x[0] - 1.0, "line").unwrap();
        let j = smooth(&f, 0.5, 2, &MollifierSpec::default()).unwrap();
        for (i, v) in j.values().iter().enumerate() {
            let x = j.geometry().node(i);
            assert!((v - (2.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mollifier_density_integrates_to_one() {
        let chi = MollifierSpec::one_sided();
        let (x, w) = gauss_legendre_unit(20);
        let mut total = 0.0;
        for p in 0..200 {
            for (xi, wi) in x.iter().zip(&w) {
                total += wi / 200.0 * chi.density(&[(p as f64 + xi) / 200.0]);
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn differences() {
        let sq = |x: &[f64]| x[0] * x[0];
        for &x in &[-3.0, 0.0, 2.5] {
            assert!((finite_difference(&sq, &[1.0], 2, &[x]) - 2.0).abs() < 1e-12);
            assert_eq!(finite_difference(&|_: &[f64]| 4.0, &[0.3], 1, &[x]), 0.0);
        }
        let xy = make_polynomial(2, vec![(vec![1, 1], 1.0)]).unwrap();
        assert_eq!(directional_derivative(&xy, &[1.0, 1.0], 2, &[0.3, -2.0]).unwrap(), 2.0);
        assert_eq!(directional_derivative(&xy, &[1.0, 0.0], 1, &[0.3, -2.0]).unwrap(), -2.0);
    }

    #[test]
    fn coefficient_json_roundtrip() {
        let b = bspline(2).unwrap();
        let c = CoefficientField::from_fn(&b, 0.5, &[(-2, 3)], |k| k[0] as f64 * 0.5).unwrap();
        let doc = c.to_json();
        assert_eq!(doc["provenance"], "manual");
        assert_eq!(CoefficientField::from_json(&doc, &b).unwrap(), c);
    }
}

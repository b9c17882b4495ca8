//! Finitely supported sequences on `Z^d`.
//!
//! Filters keep their entries in a sorted map keyed by the integer offset.
//! Separable filters additionally remember their one-dimensional factors so
//! that convolution and inversion can work per axis.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::kernel::PiecewisePolyKernel;

/// Entries of an inverted filter below this magnitude are dropped.
pub const TRUNCATION_THRESHOLD: f64 = 1e-14;

/// Default DFT size for inversions.
pub const DEFAULT_GRID: usize = 4096;

/// Default minimum symbol magnitude accepted by the inversions.
pub const DEFAULT_SYMBOL_TOL: f64 = 1e-10;

/// Geometric envelope `|a[k]| <= C rho^{‖k‖∞}` over the stored entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub rho: f64,
    #[serde(rename = "C")]
    pub constant: f64,
}

/// What was dropped when the filter was truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRecord {
    pub threshold: f64,
    pub dropped: usize,
    pub max_dropped: f64,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    dim: usize,
    entries: BTreeMap<Vec<i64>, f64>,
    factors: Option<Vec<DiscreteFilter>>,
    decay: Option<DecayCertificate>,
    truncation: Option<TruncationRecord>,
    symmetric: bool,
}

impl DiscreteFilter {
    /// Builds a filter from `(offset, value)` pairs; zero values are not stored.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, f64)>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: k.len(),
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("filter entry at {k:?}")));
            }
            if v != 0.0 {
                *map.entry(k).or_insert(0.0) += v;
            }
        }
        map.retain(|_, v| *v != 0.0);
        Ok(Self::from_map(dim, map))
    }

    fn from_map(dim: usize, entries: BTreeMap<Vec<i64>, f64>) -> Self {
        let symmetric = is_mirror_symmetric(&entries);
        DiscreteFilter {
            dim,
            entries,
            factors: None,
            decay: None,
            truncation: None,
            symmetric,
        }
    }

    /// One-dimensional filter with `values[i]` stored at offset `first + i`.
    pub fn from_dense_1d(first: i64, values: Vec<f64>) -> Self {
        let map = values
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .map(|(i, v)| (vec![first + i as i64], v))
            .collect();
        Self::from_map(1, map)
    }

    pub fn identity(dim: usize) -> Self {
        let mut map = BTreeMap::new();
        map.insert(vec![0; dim], 1.0);
        let mut out = Self::from_map(dim, map);
        if dim > 1 {
            out.factors = Some(vec![Self::identity(1); dim]);
        }
        out
    }

    /// Tensor product of one-dimensional factors.
    pub fn separable(factors: Vec<DiscreteFilter>) -> Self {
        assert!(!factors.is_empty(), "separable filter needs at least one factor");
        assert!(factors.iter().all(|f| f.dim == 1), "factors must be one-dimensional");
        if factors.len() == 1 {
            return factors.into_iter().next().unwrap();
        }
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        map.insert(Vec::new(), 1.0);
        for f in &factors {
            let mut next = BTreeMap::new();
            for (k, v) in &map {
                for (kf, vf) in &f.entries {
                    let mut key = k.clone();
                    key.push(kf[0]);
                    next.insert(key, v * vf);
                }
            }
            map = next;
        }
        map.retain(|_, v| *v != 0.0);
        let decay = combine_decay(&factors);
        let truncation = factors.iter().filter_map(|f| f.truncation).reduce(|a, b| TruncationRecord {
            threshold: a.threshold.max(b.threshold),
            dropped: a.dropped + b.dropped,
            max_dropped: a.max_dropped.max(b.max_dropped),
            grid: a.grid.max(b.grid),
        });
        let symmetric = factors.iter().all(|f| f.symmetric);
        DiscreteFilter {
            dim: factors.len(),
            entries: map,
            factors: Some(factors),
            decay,
            truncation,
            symmetric,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: &[i64]) -> f64 {
        self.entries.get(k).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i64>, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Per-axis factors when the filter is stored as a tensor product.
    pub fn factors(&self) -> Option<&[DiscreteFilter]> {
        self.factors.as_deref()
    }

    pub fn decay(&self) -> Option<DecayCertificate> {
        self.decay
    }

    pub fn truncation(&self) -> Option<TruncationRecord> {
        self.truncation
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Smallest box containing every stored offset, as inclusive `(lo, hi)` per axis.
    pub fn support_box(&self) -> Vec<(i64, i64)> {
        let mut out = vec![(i64::MAX, i64::MIN); self.dim];
        for k in self.entries.keys() {
            for (b, &ki) in out.iter_mut().zip(k) {
                b.0 = b.0.min(ki);
                b.1 = b.1.max(ki);
            }
        }
        if self.entries.is_empty() {
            out.iter_mut().for_each(|b| *b = (0, 0));
        }
        out
    }

    /// Largest `‖k‖∞` among the stored offsets.
    pub fn radius(&self) -> i64 {
        self.entries
            .keys()
            .map(|k| k.iter().map(|v| v.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// `Σ a[k] e^{-j<w,k>}`.
    pub fn symbol(&self, omega: &[f64]) -> Complex64 {
        self.entries
            .iter()
            .map(|(k, v)| {
                let phase: f64 = k.iter().zip(omega).map(|(&ki, &wi)| ki as f64 * wi).sum();
                Complex64::from_polar(*v, -phase)
            })
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::from_map(
            self.dim,
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .filter(|(_, v)| *v != 0.0)
                .collect(),
        );
        out.symmetric = self.symmetric;
        out
    }

    /// Exact finite convolution.
    pub fn convolve(&self, other: &DiscreteFilter) -> Result<DiscreteFilter> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if let (Some(fa), Some(fb)) = (&self.factors, &other.factors) {
            let factors = fa
                .iter()
                .zip(fb)
                .map(|(a, b)| a.convolve(b))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::separable(factors));
        }
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (ka, va) in &self.entries {
            for (kb, vb) in &other.entries {
                let k: Vec<i64> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                *map.entry(k).or_insert(0.0) += va * vb;
            }
        }
        map.retain(|_, v| *v != 0.0);
        Ok(Self::from_map(self.dim, map))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, v)| {
                let mut row: Vec<serde_json::Value> = k.iter().map(|&ki| json!(ki)).collect();
                row.push(json!(v));
                serde_json::Value::Array(row)
            })
            .collect();
        json!({
            "dim": self.dim,
            "entries": entries,
            "decay": self.decay,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            dim: usize,
            entries: Vec<Vec<f64>>,
            decay: Option<DecayCertificate>,
        }
        let doc: Doc =
            serde_json::from_value(value.clone()).map_err(|e| invalid("filter", e.to_string()))?;
        let mut rows = Vec::with_capacity(doc.entries.len());
        for row in doc.entries {
            if row.len() != doc.dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: doc.dim + 1,
                    actual: row.len(),
                });
            }
            let k = row[..doc.dim].iter().map(|&v| v as i64).collect();
            rows.push((k, row[doc.dim]));
        }
        let mut out = Self::from_entries(doc.dim, rows)?;
        out.decay = doc.decay;
        Ok(out)
    }
}

fn is_mirror_symmetric(entries: &BTreeMap<Vec<i64>, f64>) -> bool {
    entries.iter().all(|(k, v)| {
        let mirror: Vec<i64> = k.iter().map(|x| -x).collect();
        entries.get(&mirror) == Some(v)
    })
}

fn combine_decay(factors: &[DiscreteFilter]) -> Option<DecayCertificate> {
    // |a1[k1] a2[k2]| <= C1 C2 rho^{|k1|+|k2|} <= C1 C2 rho^{max}
    let mut rho: f64 = 0.0;
    let mut constant = 1.0;
    for f in factors {
        match f.decay {
            Some(d) => {
                rho = rho.max(d.rho);
                constant *= d.constant;
            }
            None => {
                let max = f.entries.values().fold(0.0f64, |m, v| m.max(v.abs()));
                constant *= max;
            }
        }
    }
    if rho > 0.0 {
        Some(DecayCertificate { rho, constant })
    } else {
        None
    }
}

/// Integer samples `phi[k]` over the kernel support (right-continuous at knots).
pub fn sample_kernel(kernel: &PiecewisePolyKernel) -> DiscreteFilter {
    let factors = kernel
        .axes()
        .iter()
        .map(|axis| {
            let (lo, hi) = axis.support();
            let first = lo.ceil() as i64;
            let last = hi.floor() as i64;
            let values = (first..=last).map(|k| axis.eval(k as f64)).collect();
            DiscreteFilter::from_dense_1d(first, values)
        })
        .collect();
    DiscreteFilter::separable(factors)
}

/// Multi-dimensional DFT over an `n^dim` row-major array (first axis slowest).
pub(crate) fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, l) in line.iter().enumerate() {
                    data[base + i * stride] = *l;
                }
            }
        }
    }
}

fn flat_index(k: &[i64], n: usize) -> usize {
    k.iter()
        .fold(0usize, |acc, &ki| acc * n + ki.rem_euclid(n as i64) as usize)
}

fn unflatten(mut flat: usize, n: usize, dim: usize) -> Vec<usize> {
    let mut out = vec![0; dim];
    for axis in (0..dim).rev() {
        out[axis] = flat % n;
        flat /= n;
    }
    out
}

fn check_width(filter: &DiscreteFilter, n: usize) -> Result<()> {
    for (lo, hi) in filter.support_box() {
        let width = (hi - lo + 1) as usize;
        if width >= n {
            return Err(Error::GridTooSmall { width, n });
        }
    }
    Ok(())
}

/// Symbol of `filter` on the `n^dim` DFT grid, `w = 2π m / n`.
fn symbol_grid(filter: &DiscreteFilter, n: usize) -> Result<Vec<Complex64>> {
    if n < 2 {
        return Err(invalid("n", "DFT grid needs at least two points"));
    }
    check_width(filter, n)?;
    let mut data = vec![Complex64::new(0.0, 0.0); n.pow(filter.dim as u32)];
    for (k, v) in &filter.entries {
        data[flat_index(k, n)] += *v;
    }
    fft_nd(&mut data, n, filter.dim, false);
    Ok(data)
}

fn grid_frequency(flat: usize, n: usize, dim: usize) -> Vec<f64> {
    unflatten(flat, n, dim)
        .into_iter()
        .map(|m| {
            let centered = if m >= (n + 1) / 2 { m as f64 - n as f64 } else { m as f64 };
            2.0 * std::f64::consts::PI * centered / n as f64
        })
        .collect()
}

/// Minimum of `|symbol|` over the DFT grid, with the frequency where it occurs.
pub fn symbol_minimum(filter: &DiscreteFilter, n: usize) -> Result<(f64, Vec<f64>)> {
    let data = symbol_grid(filter, n)?;
    let (idx, min) = data
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.norm()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok((min, grid_frequency(idx, n, filter.dim)))
}

/// Impulse response of `1 / symbol(filter)` by `n`-point DFT division.
pub fn invert_symbol_periodic(filter: &DiscreteFilter, n: usize, tol: f64) -> Result<DiscreteFilter> {
    if let Some(factors) = &filter.factors {
        let inverted = factors
            .iter()
            .map(|f| invert_symbol_periodic(f, n, tol))
            .collect::<Result<Vec<_>>>()?;
        return Ok(DiscreteFilter::separable(inverted));
    }
    let dim = filter.dim;
    let mut data = symbol_grid(filter, n)?;
    for (i, v) in data.iter_mut().enumerate() {
        let magnitude = v.norm();
        if !(magnitude >= tol) {
            return Err(Error::SymbolNotInvertible {
                frequency: grid_frequency(i, n, dim),
                magnitude,
                tol,
            });
        }
        *v = v.inv();
    }
    fft_nd(&mut data, n, dim, true);
    let scale = 1.0 / data.len() as f64;
    let mut map = BTreeMap::new();
    let mut dropped = 0;
    let mut max_dropped: f64 = 0.0;
    for (i, v) in data.iter().enumerate() {
        let value = v.re * scale;
        let k: Vec<i64> = unflatten(i, n, dim)
            .into_iter()
            .map(|m| if m >= n / 2 { m as i64 - n as i64 } else { m as i64 })
            .collect();
        if value.abs() < TRUNCATION_THRESHOLD {
            if value != 0.0 {
                dropped += 1;
                max_dropped = max_dropped.max(value.abs());
            }
            continue;
        }
        map.insert(k, value);
    }
    if filter.symmetric {
        symmetrize(&mut map);
    }
    let mut out = DiscreteFilter::from_map(dim, map);
    out.truncation = Some(TruncationRecord {
        threshold: TRUNCATION_THRESHOLD,
        dropped,
        max_dropped,
        grid: n,
    });
    out.decay = estimate_decay(&out.entries);
    Ok(out)
}

fn symmetrize(map: &mut BTreeMap<Vec<i64>, f64>) {
    let keys: Vec<Vec<i64>> = map.keys().cloned().collect();
    for k in keys {
        let mirror: Vec<i64> = k.iter().map(|x| -x).collect();
        if mirror < k && map.contains_key(&mirror) {
            continue;
        }
        let a = map.get(&k).copied().unwrap_or(0.0);
        let b = map.get(&mirror).copied().unwrap_or(0.0);
        let mean = 0.5 * (a + b);
        map.insert(k, mean);
        map.insert(mirror, mean);
    }
    map.retain(|_, v| v.abs() >= TRUNCATION_THRESHOLD);
}

/// Ratio of successive shell maxima; only shells above 1e-3 of the peak are used.
fn estimate_decay(entries: &BTreeMap<Vec<i64>, f64>) -> Option<DecayCertificate> {
    let mut shells: BTreeMap<i64, f64> = BTreeMap::new();
    for (k, v) in entries {
        let r = k.iter().map(|x| x.abs()).max().unwrap_or(0);
        let e = shells.entry(r).or_insert(0.0);
        *e = e.max(v.abs());
    }
    let peak = shells.values().fold(0.0f64, |m, v| m.max(*v));
    let significant: Vec<(i64, f64)> = shells
        .into_iter()
        .filter(|(_, m)| *m >= 1e-3 * peak)
        .collect();
    let rho = significant
        .windows(2)
        .filter(|w| w[1].0 == w[0].0 + 1)
        .map(|w| w[1].1 / w[0].1)
        .fold(0.0f64, f64::max);
    if !(rho > 0.0 && rho < 1.0) {
        return None;
    }
    let constant = entries
        .iter()
        .map(|(k, v)| {
            let r = k.iter().map(|x| x.abs()).max().unwrap_or(0);
            v.abs() / rho.powi(r as i32)
        })
        .fold(0.0f64, f64::max);
    Some(DecayCertificate { rho, constant })
}

/// Inverse of the kernel's autocorrelation symbol.
pub fn dual_filter(kernel: &PiecewisePolyKernel, n: usize) -> Result<DiscreteFilter> {
    dual_filter_with(kernel, n, DEFAULT_SYMBOL_TOL)
}

pub fn dual_filter_with(kernel: &PiecewisePolyKernel, n: usize, tol: f64) -> Result<DiscreteFilter> {
    let radius = kernel
        .support()
        .iter()
        .map(|(lo, hi)| (hi - lo).ceil() as usize)
        .max()
        .unwrap_or(0);
    let a = crate::kernel::autocorrelation_sequence(kernel, radius);
    let parts: Vec<DiscreteFilter> = match a.factors() {
        Some(f) => f.to_vec(),
        None => vec![a.clone()],
    };
    for part in &parts {
        let (minimum, _) = symbol_minimum(part, n)?;
        if !(minimum >= tol) {
            return Err(Error::RieszBound { minimum, tol });
        }
    }
    invert_symbol_periodic(&a, n, tol)
}

/// Interpolation prefilter: inverse of the integer samples of `kernel`.
pub fn interpolation_prefilter(kernel: &PiecewisePolyKernel, n: usize) -> Result<DiscreteFilter> {
    invert_symbol_periodic(&sample_kernel(kernel), n, DEFAULT_SYMBOL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{bspline, tensor_product};

    fn delta_error(f: &DiscreteFilter, radius: i64) -> f64 {
        crate::multiindex::lattice_box(f.dim(), radius)
            .iter()
            .map(|k| {
                let target = if k.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
                (f.get(k) - target).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samples_of_small_splines() {
        let s = sample_kernel(&bspline(4).unwrap());
        assert_eq!(s.len(), 3);
        assert!((s.get(&[1]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.get(&[2]) - 4.0 / 6.0).abs() < 1e-15);
        let hat = sample_kernel(&bspline(2).unwrap());
        assert_eq!(hat.entries().collect::<Vec<_>>(), vec![(&vec![1], 1.0)]);
        let ind = sample_kernel(&bspline(1).unwrap());
        assert_eq!(ind.entries().collect::<Vec<_>>(), vec![(&vec![0], 1.0)]);
    }

    #[test]
    fn binomial_convolution() {
        let a = DiscreteFilter::from_dense_1d(0, vec![1.0, 1.0]);
        let c = a.convolve(&a).unwrap();
        assert_eq!(c, DiscreteFilter::from_dense_1d(0, vec![1.0, 2.0, 1.0]));
        assert_eq!(c.convolve(&DiscreteFilter::identity(1)).unwrap(), c);
    }

    #[test]
    fn identity_inverts_to_identity() {
        let inv = invert_symbol_periodic(&DiscreteFilter::identity(1), 64, 1e-10).unwrap();
        assert_eq!(inv.entries().collect::<Vec<_>>(), vec![(&vec![0], 1.0)]);
        assert!(inv.decay().is_none());
    }

    #[test]
    fn cubic_inverse_is_symmetric_with_pole_decay() {
        let s = sample_kernel(&bspline(4).unwrap().centered());
        assert!(s.is_symmetric());
        let a = invert_symbol_periodic(&s, 4096, 1e-10).unwrap();
        assert!(a.is_symmetric());
        let rho = a.decay().unwrap().rho;
        assert!((rho - (2.0 - 3f64.sqrt())).abs() < 1e-6, "{rho}");
        assert!(delta_error(&a.convolve(&s).unwrap(), 16) < 1e-10);
        for (k, v) in a.entries() {
            assert_eq!(v, a.get(&[-k[0]]));
        }
    }

    #[test]
    fn vanishing_symbol_is_refused() {
        // causal hat sampled at 0 and 1 after a half shift: symbol 1 + e^{-jw} vanishes at pi
        let f = DiscreteFilter::from_dense_1d(0, vec![0.5, 0.5]);
        match invert_symbol_periodic(&f, 64, 1e-10) {
            Err(Error::SymbolNotInvertible { frequency, .. }) => {
                assert!((frequency[0].abs() - std::f64::consts::PI).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_must_fit_support() {
        let f = DiscreteFilter::from_dense_1d(-4, vec![1.0; 9]);
        assert!(matches!(
            invert_symbol_periodic(&f, 8, 1e-10),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn separable_inverse_matches_direct_two_dimensional_inverse() {
        let k = bspline(4).unwrap().centered();
        let t = tensor_product(&[k.clone(), k]).unwrap();
        let s = sample_kernel(&t);
        let sep = invert_symbol_periodic(&s, 64, 1e-10).unwrap();
        let plain = DiscreteFilter::from_entries(2, s.entries().map(|(k, v)| (k.clone(), v))).unwrap();
        let direct = invert_symbol_periodic(&plain, 64, 1e-10).unwrap();
        for (k, v) in direct.entries() {
            assert!((sep.get(k) - v).abs() < 1e-13);
        }
        assert!(delta_error(&sep.convolve(&s).unwrap(), 8) < 1e-10);
    }

    #[test]
    fn dual_of_indicator_is_identity() {
        let q = dual_filter(&bspline(1).unwrap(), 256).unwrap();
        assert_eq!(q.entries().collect::<Vec<_>>(), vec![(&vec![0], 1.0)]);
    }

    #[test]
    fn dual_of_hat_alternates() {
        let q = dual_filter(&bspline(2).unwrap(), 1024).unwrap();
        for k in 0..6 {
            assert!(q.get(&[k]) * q.get(&[k + 1]) < 0.0);
        }
    }

    #[test]
    fn json_roundtrip() {
        let a = invert_symbol_periodic(&sample_kernel(&bspline(4).unwrap().centered()), 256, 1e-10).unwrap();
        let doc = a.to_json();
        assert!(doc["decay"]["rho"].is_number());
        assert!(doc["decay"]["C"].is_number());
        let back = DiscreteFilter::from_json(&doc).unwrap();
        assert_eq!(back.len(), a.len());
        assert_eq!(back.decay(), a.decay());
        assert_eq!(back.get(&[3]), a.get(&[3]));
    }
}

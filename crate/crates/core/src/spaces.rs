//! Weighted norms on uniform grids, derivative magnitudes and the Bessel
//! potential multiplier.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dfilter::fft_nd;
use crate::error::{invalid, Error, Result};
use crate::multiindex;
use crate::quad::simpson_weights;
use crate::signals::{Growth, Signal};

/// Relative tail size above which a norm result is flagged.
pub const TAIL_FLAG_FRACTION: f64 = 0.01;

/// Boundary-to-peak ratio above which a periodized multiplier is flagged.
pub const WRAP_FLAG_RATIO: f64 = 1e-6;

/// Default accuracy order of the finite-difference fallback.
pub const DEFAULT_FD_ACCURACY: usize = 8;

/// `(1 + ‖x‖²)^{alpha/2}`.
pub fn weight(x: &[f64], alpha: f64) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(alpha / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSign {
    /// `⟨x⟩^{+alpha}`, penalizes growth.
    Plus,
    /// `⟨x⟩^{-alpha}`, tolerates growth.
    Minus,
}

impl WeightSign {
    fn signed(self, alpha: f64) -> f64 {
        match self {
            WeightSign::Plus => alpha,
            WeightSign::Minus => -alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub rule: QuadratureRule,
    /// Panel width; `None` uses the grid step.
    pub step: Option<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rule: QuadratureRule::Simpson,
            step: None,
        }
    }
}

/// Which weighted norm to evaluate, over the box `[-window, window]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    #[serde(with = "exponent")]
    pub p: f64,
    pub alpha: f64,
    pub sign: WeightSign,
    pub window: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl WeightedNormSpec {
    pub fn new(p: f64, alpha: f64, sign: WeightSign, window: f64) -> Self {
        WeightedNormSpec {
            p,
            alpha,
            sign,
            window,
            quadrature: Quadrature::default(),
        }
    }

    /// The growth-tolerant norm `L_{p,-alpha}`.
    pub fn tolerant(p: f64, alpha: f64, window: f64) -> Self {
        Self::new(p, alpha, WeightSign::Minus, window)
    }
}

/// Serializes an exponent, writing `p = ∞` as the string `"inf"`.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Inf" | "∞") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent `{t}`"))),
        }
    }
}

/// Uniform grid over `[-half_width, half_width]^dim` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub dim: usize,
    pub half_width: f64,
    pub step: f64,
    /// Nodes per axis, `2 half_width / step + 1`.
    pub n: usize,
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let rounded = r.round();
    if rounded >= 0.0 && (r - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}

impl GridGeometry {
    pub fn new(dim: usize, half_width: f64, step: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "dimension must be positive"));
        }
        if !(step > 0.0 && half_width > 0.0) {
            return Err(invalid("step", "step and half-width must be positive"));
        }
        let panels = integer_ratio(2.0 * half_width, step).ok_or_else(|| {
            Error::Misaligned(format!("window 2·{half_width} is not a multiple of step {step}"))
        })?;
        Ok(GridGeometry {
            dim,
            half_width,
            step,
            n: panels + 1,
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step
    }

    /// Index of the origin along each axis.
    pub fn origin(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of rows; a row runs along the last axis.
    pub fn rows(&self) -> usize {
        self.n.pow(self.dim as u32 - 1)
    }

    /// Coordinates on the leading `dim - 1` axes of a row.
    pub fn row_coords(&self, mut row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim - 1];
        for axis in (0..self.dim - 1).rev() {
            out[axis] = self.node(row % self.n);
            row /= self.n;
        }
        out
    }

    /// Row index from per-axis indices of the leading axes.
    pub fn row_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = flat % self.n;
            flat /= self.n;
        }
        out
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat).into_iter().map(|i| self.node(i)).collect()
    }

    /// Same step on a smaller centered window.
    pub fn shrink(&self, half_width: f64) -> Result<Self> {
        if half_width > self.half_width + 1e-9 * self.half_width {
            return Err(invalid("half_width", "sub-window exceeds the grid window"));
        }
        let g = GridGeometry::new(self.dim, half_width, self.step)?;
        integer_ratio(self.half_width - half_width, self.step)
            .ok_or_else(|| Error::Misaligned("sub-window edge is off the grid".into()))?;
        Ok(g)
    }
}

/// Grid values produced one row at a time.
pub trait GridField: Sync {
    fn geometry(&self) -> &GridGeometry;

    /// Writes the `n` values of `row` into `out`.
    fn fill_row(&self, row: usize, out: &mut [f64]);

    fn growth(&self) -> Option<Growth> {
        None
    }
}

/// Materialized grid samples.
#[derive(Debug, Clone)]
pub struct GridSignal {
    geometry: GridGeometry,
    values: Vec<f64>,
    growth: Option<Growth>,
    provenance: String,
    periodic: bool,
    boundary_band: usize,
    flags: Vec<String>,
    callback: Option<Arc<dyn Signal>>,
}

impl GridSignal {
    pub fn from_values(geometry: GridGeometry, values: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::DimensionMismatch {
                expected: geometry.len(),
                actual: values.len(),
            });
        }
        let provenance = provenance.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{provenance} at node {:?}", geometry.point(i))));
        }
        Ok(GridSignal {
            geometry,
            values,
            growth: None,
            provenance,
            periodic: false,
            boundary_band: 0,
            flags: Vec::new(),
            callback: None,
        })
    }

    pub fn from_fn<F>(geometry: GridGeometry, f: F, provenance: impl Into<String>) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let values = (0..geometry.len()).map(|i| f(&geometry.point(i))).collect();
        Self::from_values(geometry, values, provenance)
    }

    /// Samples a library signal and keeps it as the off-grid callback.
    pub fn from_signal(signal: Arc<dyn Signal>, geometry: GridGeometry) -> Result<Self> {
        if signal.dim() != geometry.dim {
            return Err(Error::DimensionMismatch {
                expected: geometry.dim,
                actual: signal.dim(),
            });
        }
        let provenance = serde_json::to_string(&signal.spec()).expect("signal spec serializes");
        let mut out = Self::from_fn(geometry, |x| signal.value(x), provenance)?;
        out.growth = Some(signal.growth());
        out.callback = Some(signal);
        Ok(out)
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        self.values[idx.iter().fold(0, |acc, &i| acc * self.geometry.n + i)]
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Nodes per side where one-sided stencils were used.
    pub fn boundary_band(&self) -> usize {
        self.boundary_band
    }

    pub fn flags(&self) -> &[String] {
        &self.flags
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn callback(&self) -> Option<&Arc<dyn Signal>> {
        self.callback.as_ref()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.callback = None;
        out.growth = match self.growth {
            Some(Growth::Polynomial { order, constant }) => Some(Growth::Polynomial {
                order,
                constant: constant.map(|k| k * c.abs()),
            }),
            other => other,
        };
        out
    }

    /// Pointwise combination of two signals on the same grid.
    pub fn zip_with(&self, other: &GridSignal, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.geometry != other.geometry {
            return Err(invalid("geometry", "signals live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Self::from_values(self.geometry, values, "combined")
    }

    /// Restriction to a smaller centered window.
    pub fn restrict(&self, half_width: f64) -> Result<Self> {
        let g = self.geometry.shrink(half_width)?;
        let offset = ((self.geometry.half_width - half_width) / self.geometry.step).round() as usize;
        let values = (0..g.len())
            .map(|flat| {
                let idx: Vec<usize> = g.unflatten(flat).into_iter().map(|i| i + offset).collect();
                self.value(&idx)
            })
            .collect();
        let mut out = Self::from_values(g, values, self.provenance.clone())?;
        out.growth = self.growth;
        out.callback = self.callback.clone();
        out.flags = self.flags.clone();
        out.boundary_band = self.boundary_band.saturating_sub(offset);
        Ok(out)
    }

    /// `index,value` rows with the flat row-major index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v:e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "dim": self.geometry.dim,
            "half_width": self.geometry.half_width,
            "step": self.geometry.step,
            "provenance": self.provenance,
            "periodic": self.periodic,
            "flags": self.flags,
            "values": self.values,
        })
    }
}

impl GridField for GridSignal {
    fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    fn fill_row(&self, row: usize, out: &mut [f64]) {
        let n = self.geometry.n;
        out.copy_from_slice(&self.values[row * n..(row + 1) * n]);
    }

    fn growth(&self) -> Option<Growth> {
        self.growth
    }
}

type RowFill<'a> = Box<dyn Fn(usize, &mut [f64]) + Sync + 'a>;

/// Grid values computed on demand, row by row.
pub struct LazyGrid<'a> {
    geometry: GridGeometry,
    fill: RowFill<'a>,
    growth: Option<Growth>,
}

impl<'a> LazyGrid<'a> {
    pub fn new(geometry: GridGeometry, fill: impl Fn(usize, &mut [f64]) + Sync + 'a) -> Self {
        LazyGrid {
            geometry,
            fill: Box::new(fill),
            growth: None,
        }
    }

    /// Pointwise evaluation of `f` at the grid nodes.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(&[f64]) -> f64 + Sync + 'a) -> Self {
        Self::new(geometry, move |row, out| {
            let mut x = geometry.row_coords(row);
            x.push(0.0);
            let last = geometry.dim - 1;
            for (j, o) in out.iter_mut().enumerate() {
                x[last] = geometry.node(j);
                *o = f(&x);
            }
        })
    }

    pub fn from_signal(signal: &'a dyn Signal, geometry: GridGeometry) -> Self {
        let growth = signal.growth();
        Self::from_fn(geometry, move |x| signal.value(x)).with_growth(growth)
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn materialize(&self, provenance: &str) -> Result<GridSignal> {
        let n = self.geometry.n;
        let mut values = vec![0.0; self.geometry.len()];
        for (row, chunk) in values.chunks_mut(n).enumerate() {
            (self.fill)(row, chunk);
        }
        let mut out = GridSignal::from_values(self.geometry, values, provenance)?;
        out.growth = self.growth;
        Ok(out)
    }
}

impl GridField for LazyGrid<'_> {
    fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    fn fill_row(&self, row: usize, out: &mut [f64]) {
        (self.fill)(row, out)
    }

    fn growth(&self) -> Option<Growth> {
        self.growth
    }
}

/// A norm value with its window certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub norm: f64,
    /// Upper bound on how much the norm over `R^d` can exceed `norm`;
    /// `None` when the field declares no growth.
    pub tail_bound: Option<f64>,
    pub flagged: bool,
    pub spec: WeightedNormSpec,
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(d: usize) -> f64 {
    // S_{d-1} = 2 π^{d/2} / Γ(d/2), via the recurrence S_{d+1} = 2π S_{d-1} / d
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * sphere_area(d - 2) / (d - 2) as f64,
    }
}

/// Bound on the norm of `C ⟨x⟩^{growth + signed alpha}` outside the window.
pub fn tail_mass(dim: usize, p: f64, exponent: f64, constant: f64, window: f64) -> f64 {
    if constant == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return if exponent <= 0.0 {
            constant * window.powf(exponent)
        } else {
            f64::INFINITY
        };
    }
    let d = dim as f64;
    let power = exponent * p + d;
    if power >= 0.0 {
        return f64::INFINITY;
    }
    let integral = sphere_area(dim) * window.powf(power) / (-power);
    constant * integral.powf(1.0 / p)
}

fn axis_weights(n: usize, step: f64) -> Vec<f64> {
    simpson_weights(n).into_iter().map(|w| w * step).collect()
}

/// Largest power of two not above `v`, or 1 for subnormal input.
fn binade(v: f64) -> f64 {
    let b = f64::from_bits(v.to_bits() & 0xfff0_0000_0000_0000);
    if b == 0.0 {
        1.0
    } else {
        b
    }
}

/// `(∫ |f ⟨x⟩^{±alpha}|^p)^{1/p}` over the requested window by composite Simpson,
/// grid max for `p = ∞`.
pub fn weighted_lp_norm(f: &dyn GridField, spec: &WeightedNormSpec) -> Result<NormResult> {
    if !(spec.p >= 1.0) {
        return Err(invalid("p", format!("exponent {} is below 1", spec.p)));
    }
    let g = *f.geometry();
    let stride = match spec.quadrature.step {
        None => 1,
        Some(q) => integer_ratio(q, g.step)
            .filter(|&s| s >= 1)
            .ok_or_else(|| Error::Misaligned(format!("quadrature step {q} is not a multiple of grid step {}", g.step)))?,
    };
    let q = stride as f64 * g.step;
    if spec.window > g.half_width * (1.0 + 1e-12) {
        return Err(invalid("window", "norm window exceeds the signal window"));
    }
    let offset = integer_ratio(g.half_width - spec.window, g.step)
        .ok_or_else(|| Error::Misaligned("norm window edge is off the grid".into()))?;
    let panels = integer_ratio(2.0 * spec.window, q)
        .ok_or_else(|| Error::Misaligned("norm window is not a multiple of the quadrature step".into()))?;
    let m = panels + 1;
    let idx: Vec<usize> = (0..m).map(|i| offset + i * stride).collect();
    let w = axis_weights(m, q);
    let p = spec.p;
    let signed_alpha = spec.sign.signed(spec.alpha);
    let growth = f.growth();
    let growth_order = match growth {
        Some(Growth::Polynomial { order, .. }) => order,
        _ => 0.0,
    };

    let dim = g.dim;
    let mut row_buf = vec![0.0; g.n];
    let mut total = 0.0;
    let mut peak: f64 = 0.0;
    // power of two fixed by the first nonzero integrand value; keeps the
    // sum in range and makes scaling by powers of two exact
    let mut scale = 0.0;
    let mut growth_estimate: f64 = 0.0;
    let mut lead = vec![0usize; dim - 1];
    let rows = m.pow(dim as u32 - 1);
    for r in 0..rows {
        let mut rem = r;
        let mut row_weight = 1.0;
        for axis in (0..dim - 1).rev() {
            lead[axis] = rem % m;
            rem /= m;
            row_weight *= w[lead[axis]];
        }
        let grid_lead: Vec<usize> = lead.iter().map(|&i| idx[i]).collect();
        let lead_sq: f64 = grid_lead.iter().map(|&i| g.node(i).powi(2)).sum();
        f.fill_row(g.row_index(&grid_lead), &mut row_buf);
        let mut row_sum = 0.0;
        for (j, &gj) in idx.iter().enumerate() {
            let v = row_buf[gj].abs();
            let bracket_sq = 1.0 + lead_sq + g.node(gj).powi(2);
            let weighted = v * bracket_sq.powf(signed_alpha / 2.0);
            if !weighted.is_finite() {
                return Err(Error::NonFinite("weighted norm integrand".into()));
            }
            if p.is_infinite() {
                peak = peak.max(weighted);
            } else if weighted > 0.0 {
                if scale == 0.0 {
                    scale = binade(weighted);
                }
                row_sum += w[j] * (weighted / scale).powf(p);
            }
            growth_estimate = growth_estimate.max(v / bracket_sq.powf(growth_order / 2.0));
        }
        total += row_weight * row_sum;
    }
    let norm = if p.is_infinite() {
        peak
    } else {
        scale * total.powf(1.0 / p)
    };

    let tail_bound = match growth {
        None => None,
        Some(Growth::Compact) => Some(0.0),
        Some(Growth::Polynomial { order, constant }) => {
            let c = constant.unwrap_or(growth_estimate);
            let tau = tail_mass(dim, p, order + signed_alpha, c, spec.window);
            Some(if tau.is_infinite() {
                f64::INFINITY
            } else if p.is_infinite() {
                norm.max(tau) - norm
            } else {
                (norm.powf(p) + tau.powf(p)).powf(1.0 / p) - norm
            })
        }
    };
    let flagged = tail_bound.is_some_and(|t| t > TAIL_FLAG_FRACTION * norm && t > 0.0);
    Ok(NormResult {
        norm,
        tail_bound,
        flagged,
        spec: *spec,
    })
}

/// `(Σ_k |c[k]|^p ⟨scale·k⟩^{±alpha p})^{1/p}`.
pub fn weighted_sequence_norm<'a, I>(entries: I, scale: f64, p: f64, alpha: f64, sign: WeightSign) -> f64
where
    I: IntoIterator<Item = (&'a [i64], f64)>,
{
    let signed_alpha = sign.signed(alpha);
    let mut total = 0.0;
    let mut peak: f64 = 0.0;
    for (k, v) in entries {
        let x: Vec<f64> = k.iter().map(|&ki| scale * ki as f64).collect();
        let weighted = v.abs() * weight(&x, signed_alpha);
        if p.is_infinite() {
            peak = peak.max(weighted);
        } else {
            total += weighted.powf(p);
        }
    }
    if p.is_infinite() {
        peak
    } else {
        total.powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridNorm {
    pub norm: f64,
    pub fold_radius: usize,
    /// Geometric extrapolation of the shells beyond the fold radius.
    pub tail_estimate: f64,
}

/// `(∫_{[0,1]^d} (Σ_{‖k‖∞<=K} |f(x+k)| ⟨x+k⟩^alpha)^p dx)^{1/p}` with
/// `nodes` Simpson nodes per axis on the unit cell.
pub fn hybrid_norm(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    p: f64,
    alpha: f64,
    fold_radius: usize,
    nodes: usize,
) -> Result<HybridNorm> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("exponent {p} is below 1")));
    }
    if nodes < 3 {
        return Err(invalid("nodes", "need at least three nodes per axis"));
    }
    let step = 1.0 / (nodes - 1) as f64;
    let w = axis_weights(nodes, step);
    let lattice = multiindex::lattice_box(dim, fold_radius as i64);
    let k_max = fold_radius as i64;
    let mut total = 0.0;
    let mut peak: f64 = 0.0;
    let (mut outer, mut inner): (f64, f64) = (0.0, 0.0);
    for flat in 0..nodes.pow(dim as u32) {
        let mut rem = flat;
        let mut x = vec![0.0; dim];
        let mut wt = 1.0;
        for axis in (0..dim).rev() {
            let i = rem % nodes;
            rem /= nodes;
            x[axis] = i as f64 * step;
            wt *= w[i];
        }
        let mut sum = 0.0;
        let (mut shell_outer, mut shell_inner) = (0.0, 0.0);
        for k in &lattice {
            let y: Vec<f64> = x.iter().zip(k).map(|(xi, &ki)| xi + ki as f64).collect();
            let term = f(&y).abs() * weight(&y, alpha);
            sum += term;
            let r = k.iter().map(|v| v.abs()).max().unwrap_or(0);
            if r == k_max {
                shell_outer += term;
            } else if r + 1 == k_max {
                shell_inner += term;
            }
        }
        outer = outer.max(shell_outer);
        inner = inner.max(shell_inner);
        if p.is_infinite() {
            peak = peak.max(sum);
        } else {
            total += wt * sum.powf(p);
        }
    }
    let norm = if p.is_infinite() { peak } else { total.powf(1.0 / p) };
    let tail_estimate = if outer == 0.0 {
        0.0
    } else if inner > 0.0 && outer < inner {
        let rho = outer / inner;
        outer * rho / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    Ok(HybridNorm {
        norm,
        fold_radius,
        tail_estimate,
    })
}

/// Finite-difference weights for the `order`-th derivative at `z` on `nodes`.
pub fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Stencil width for a centered difference of `order` with `accuracy`.
fn stencil_points(order: usize, accuracy: usize) -> usize {
    2 * ((order + 1) / 2) - 1 + accuracy
}

/// Applies an `order`-th difference along `axis`; returns values and band width.
fn difference_along(values: &[f64], g: &GridGeometry, axis: usize, order: usize, accuracy: usize) -> Result<(Vec<f64>, usize)> {
    if order == 0 {
        return Ok((values.to_vec(), 0));
    }
    let npts = stencil_points(order, accuracy);
    if npts > g.n {
        return Err(invalid("step", "grid too coarse for the finite-difference stencil"));
    }
    let half = npts / 2;
    let scale = g.step.powi(order as i32);
    let stencils: Vec<Vec<f64>> = (0..npts)
        .map(|at| {
            let nodes: Vec<f64> = (0..npts).map(|i| i as f64).collect();
            fornberg_weights(at as f64, &nodes, order).into_iter().map(|w| w / scale).collect()
        })
        .collect();
    let stride = g.n.pow((g.dim - 1 - axis) as u32);
    let mut out = vec![0.0; values.len()];
    for base in 0..values.len() {
        if (base / stride) % g.n != 0 {
            continue;
        }
        for i in 0..g.n {
            let start = i.saturating_sub(half).min(g.n - npts);
            let weights = &stencils[i - start];
            out[base + i * stride] = weights
                .iter()
                .enumerate()
                .map(|(s, w)| w * values[base + (start + s) * stride])
                .sum();
        }
    }
    Ok((out, half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// Analytic partials when the signal carries them, differences otherwise.
    Auto,
    FiniteDifference { accuracy: usize },
}

/// `f^{(L)} = Σ_{|l|=L} |∂^l f|` on the grid of `f`.
pub fn derivative_magnitude(f: &GridSignal, order: usize) -> Result<GridSignal> {
    derivative_magnitude_with(f, order, DerivativeMethod::Auto)
}

pub fn derivative_magnitude_with(f: &GridSignal, order: usize, method: DerivativeMethod) -> Result<GridSignal> {
    let g = *f.geometry();
    let analytic = match (method, f.callback()) {
        (DerivativeMethod::Auto, Some(s)) if s.max_order() >= order => Some(s.clone()),
        _ => None,
    };
    if let Some(signal) = analytic {
        let mut values = Vec::with_capacity(g.len());
        for flat in 0..g.len() {
            let x = g.point(flat);
            values.push(signal.partials(order, &x)?.iter().map(|v| v.abs()).sum());
        }
        let mut out = GridSignal::from_values(g, values, format!("magnitude of order {order}, analytic"))?;
        out.growth = f.growth().map(derivative_growth);
        return Ok(out);
    }
    let accuracy = match method {
        DerivativeMethod::FiniteDifference { accuracy } => accuracy,
        DerivativeMethod::Auto => DEFAULT_FD_ACCURACY,
    };
    if accuracy < 4 || accuracy % 2 == 1 {
        return Err(invalid("accuracy", "finite-difference accuracy must be even and at least 4"));
    }
    let mut total = vec![0.0; g.len()];
    let mut band = 0;
    for l in multiindex::with_order(g.dim, order) {
        let mut current = f.values().to_vec();
        for (axis, &la) in l.iter().enumerate() {
            let (next, b) = difference_along(&current, &g, axis, la, accuracy)?;
            current = next;
            band = band.max(b);
        }
        total.iter_mut().zip(&current).for_each(|(t, c)| *t += c.abs());
    }
    let mut out = GridSignal::from_values(g, total, format!("magnitude of order {order}, finite differences"))?;
    out.growth = f.growth().map(derivative_growth);
    out.boundary_band = band;
    if band > 0 {
        out.flags.push(format!("one-sided stencils within {band} nodes of the boundary"));
    }
    Ok(out)
}

fn derivative_growth(g: Growth) -> Growth {
    match g {
        Growth::Polynomial { order, .. } => Growth::polynomial(order),
        Growth::Compact => Growth::Compact,
    }
}

/// `D^r f = F^{-1}{⟨ω⟩^r F f}` on the periodized window.
pub fn fractional_derivative(f: &GridSignal, r: f64) -> Result<GridSignal> {
    fractional_derivative_weighted(f, r, 0.0)
}

/// As [`fractional_derivative`], checking wrap-around on `|f ⟨x⟩^{-alpha}|`.
pub fn fractional_derivative_weighted(f: &GridSignal, r: f64, alpha: f64) -> Result<GridSignal> {
    let g = *f.geometry();
    let period = g.n - 1;
    if period < 2 {
        return Err(invalid("grid", "need at least three nodes per axis"));
    }
    let dim = g.dim;
    let total = period.pow(dim as u32);
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for (flat, d) in data.iter_mut().enumerate() {
        let idx = unflatten(flat, period, dim);
        *d = Complex64::new(f.value(&idx), 0.0);
    }
    fft_nd(&mut data, period, dim, false);
    let base = 2.0 * std::f64::consts::PI / (period as f64 * g.step);
    for (flat, d) in data.iter_mut().enumerate() {
        let idx = unflatten(flat, period, dim);
        let norm_sq: f64 = idx
            .iter()
            .map(|&m| {
                let c = if m > period / 2 { m as f64 - period as f64 } else { m as f64 };
                (base * c).powi(2)
            })
            .sum();
        *d *= (1.0 + norm_sq).powf(r / 2.0) / total as f64;
    }
    fft_nd(&mut data, period, dim, true);
    let values: Vec<f64> = (0..g.len())
        .map(|flat| {
            let idx: Vec<usize> = g.unflatten(flat).into_iter().map(|i| i % period).collect();
            data[idx.iter().fold(0, |acc, &i| acc * period + i)].re
        })
        .collect();
    let mut out = GridSignal::from_values(g, values, "spectral")?;
    out.periodic = f.periodic;
    out.growth = f.growth().map(derivative_growth);
    if !f.periodic {
        let (boundary, peak) = boundary_ratio(f, alpha);
        if boundary > WRAP_FLAG_RATIO * peak {
            out.flags.push(format!(
                "wrap-around: boundary magnitude {boundary:.3e} exceeds {WRAP_FLAG_RATIO:e} of peak {peak:.3e}"
            ));
        }
    }
    Ok(out)
}

fn unflatten(mut flat: usize, n: usize, dim: usize) -> Vec<usize> {
    let mut out = vec![0; dim];
    for axis in (0..dim).rev() {
        out[axis] = flat % n;
        flat /= n;
    }
    out
}

/// Max of `|f ⟨x⟩^{-alpha}|` on the boundary faces and over the whole grid.
fn boundary_ratio(f: &GridSignal, alpha: f64) -> (f64, f64) {
    let g = f.geometry();
    let mut boundary: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (flat, v) in f.values().iter().enumerate() {
        let idx = g.unflatten(flat);
        let x: Vec<f64> = idx.iter().map(|&i| g.node(i)).collect();
        let weighted = v.abs() * weight(&x, -alpha);
        peak = peak.max(weighted);
        if idx.iter().any(|&i| i == 0 || i == g.n - 1) {
            boundary = boundary.max(weighted);
        }
    }
    (boundary, peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::bspline;
    use crate::signals::{make_growing_oscillation, make_polynomial};

    #[test]
    fn weight_basics() {
        assert_eq!(weight(&[0.0, 0.0], 3.7), 1.0);
        assert_eq!(weight(&[5.0], 0.0), 1.0);
        assert!((weight(&[3.0, 4.0], 2.0) - 26.0).abs() < 1e-12);
    }

    #[test]
    fn zero_and_cancelled_weight() {
        let g = GridGeometry::new(1, 4.0, 0.25).unwrap();
        let zero = GridSignal::from_fn(g, |_| 0.0, "zero").unwrap();
        let spec = WeightedNormSpec::tolerant(2.0, 1.0, 4.0);
        assert_eq!(weighted_lp_norm(&zero, &spec).unwrap().norm, 0.0);
        let grow = GridSignal::from_fn(g, |x| weight(x, 1.5), "bracket").unwrap();
        let sup = weighted_lp_norm(&grow, &WeightedNormSpec::tolerant(f64::INFINITY, 1.5, 4.0)).unwrap();
        assert!((sup.norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indicator_norm() {
        let g = GridGeometry::new(1, 2.0, 1.0 / 64.0).unwrap();
        let b0 = bspline(1).unwrap();
        let ind = GridSignal::from_fn(g, |x| b0.eval(x), "indicator")
            .unwrap()
            .with_growth(Growth::Compact);
        let r = weighted_lp_norm(&ind, &WeightedNormSpec::tolerant(2.0, 0.0, 2.0)).unwrap();
        assert!((r.norm - 1.0).abs() < 4.0 / 64.0, "{}", r.norm);
        assert_eq!(r.tail_bound, Some(0.0));
        assert!(!r.flagged);
    }

    #[test]
    fn tail_flag_reflects_window() {
        let s = Arc::new(make_growing_oscillation(1.0, 1.0).unwrap());
        let g = GridGeometry::new(1, 64.0, 0.125).unwrap();
        let f = GridSignal::from_signal(s, g).unwrap();
        let ok = weighted_lp_norm(&f, &WeightedNormSpec::tolerant(2.0, 2.5, 64.0)).unwrap();
        assert!(!ok.flagged, "{ok:?}");
        let bad = weighted_lp_norm(&f, &WeightedNormSpec::tolerant(2.0, 1.2, 64.0)).unwrap();
        assert!(bad.flagged, "{bad:?}");
    }

    #[test]
    fn quadrature_step_subsamples() {
        let g = GridGeometry::new(1, 3.0, 0.25).unwrap();
        let f = GridSignal::from_fn(g, |x| x[0] * x[0], "square").unwrap();
        let mut spec = WeightedNormSpec::tolerant(1.0, 0.0, 2.0);
        spec.quadrature.step = Some(0.5);
        assert!((weighted_lp_norm(&f, &spec).unwrap().norm - 16.0 / 3.0).abs() < 1e-12);
        spec.quadrature.step = Some(0.3);
        assert!(weighted_lp_norm(&f, &spec).is_err());
        assert!(weighted_lp_norm(&f, &WeightedNormSpec::tolerant(0.5, 0.0, 2.0)).is_err());
    }

    #[test]
    fn hybrid_norm_of_cubic_spline() {
        let b = bspline(4).unwrap();
        let f = |x: &[f64]| b.eval(x);
        let h = hybrid_norm(&f, 1, f64::INFINITY, 0.0, 5, 65).unwrap();
        assert!((h.norm - 1.0).abs() < 1e-14);
        assert_eq!(h.tail_estimate, 0.0);
        let zero = |_: &[f64]| 0.0;
        assert_eq!(hybrid_norm(&zero, 1, 2.0, 1.0, 3, 9).unwrap().norm, 0.0);
    }

    #[test]
    fn second_derivative_of_square() {
        let g = GridGeometry::new(1, 2.0, 0.125).unwrap();
        let p = Arc::new(make_polynomial(1, vec![(vec![2], 1.0)]).unwrap());
        let f = GridSignal::from_signal(p, g).unwrap();
        let analytic = derivative_magnitude(&f, 2).unwrap();
        assert!(analytic.values().iter().all(|v| (v - 2.0).abs() < 1e-15));
        let fd = derivative_magnitude_with(&f, 2, DerivativeMethod::FiniteDifference { accuracy: 4 }).unwrap();
        assert!(fd.values().iter().all(|v| (v - 2.0).abs() < 1e-9));
        assert!(fd.boundary_band() > 0 && fd.is_flagged());
    }

    #[test]
    fn mixed_partial_magnitude() {
        let g = GridGeometry::new(2, 1.0, 0.25).unwrap();
        let f = GridSignal::from_fn(g, |x| x[0] * x[1], "xy").unwrap();
        let d = derivative_magnitude(&f, 1).unwrap();
        for flat in 0..g.len() {
            let x = g.point(flat);
            assert!((d.values()[flat] - (x[0].abs() + x[1].abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn fractional_identity_and_tone() {
        let pi = std::f64::consts::PI;
        let g = GridGeometry::new(1, 64.0 * pi, pi / 16.0).unwrap();
        let f = GridSignal::from_fn(g, |x| x[0].cos(), "cos").unwrap().with_periodic(true);
        let same = fractional_derivative(&f, 0.0).unwrap();
        for (a, b) in same.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let d = fractional_derivative(&f, 1.3).unwrap();
        assert!(!d.is_flagged());
        for (i, v) in d.values().iter().enumerate() {
            assert!((v - 2f64.powf(0.65) * g.node(i).cos()).abs() < 1e-9);
        }
        let back = fractional_derivative(&d, -1.3).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fractional_flags_wraparound() {
        let g = GridGeometry::new(1, 8.0, 0.125).unwrap();
        let f = GridSignal::from_fn(g, |x| x[0], "ramp").unwrap();
        assert!(fractional_derivative(&f, 1.0).unwrap().is_flagged());
    }

    #[test]
    fn spec_serializes_infinite_exponent() {
        let spec = WeightedNormSpec::tolerant(f64::INFINITY, 2.0, 8.0);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"inf\""));
        let back: WeightedNormSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}

//! Compactly supported piecewise-polynomial kernels.
//!
//! A kernel is a tensor product of one-dimensional piecewise polynomials.
//! Each axis stores ascending knots and, per knot interval, monomial
//! coefficients in the local coordinate `t = x - knot_i`. Evaluation at a
//! knot takes the value of the interval to its right.
//!
//! B-splines are built by exact rational convolution of the unit indicator
//! with itself, so their pieces carry exact coefficients that can be emitted
//! as integer fractions.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dfilter::DiscreteFilter;
use crate::error::{invalid, Error, Result};
use crate::{multiindex, poly};

/// Largest supported B-spline order (degree + 1).
pub const MAX_BSPLINE_ORDER: usize = 16;

/// B-splines up to this order carry exact rational coefficients.
pub const RATIONAL_MAX_ORDER: usize = 8;

/// Default lattice radius for the spectral zero checks.
pub const STRANG_FIX_KMAX: i64 = 8;

/// Default absolute tolerance for the spectral zero checks.
pub const STRANG_FIX_TOL: f64 = 1e-10;

type Rational = Ratio<i128>;

/// One axis of a separable kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisPoly {
    pub knots: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    /// Exact coefficients as `[numerator, denominator]` pairs, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rational: Option<Vec<Vec<[i64; 2]>>>,
}

impl AxisPoly {
    pub fn new(knots: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("knots", "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(invalid("knots", "knots must be finite and strictly ascending"));
        }
        if coeffs.len() != knots.len() - 1 {
            return Err(invalid(
                "coeffs",
                format!("{} pieces for {} knot intervals", coeffs.len(), knots.len() - 1),
            ));
        }
        Ok(AxisPoly {
            knots,
            coeffs,
            rational: None,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .map(|c| c.iter().rposition(|&v| v != 0.0).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn pieces(&self) -> usize {
        self.coeffs.len()
    }

    fn piece_index(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if !(x >= lo && x < hi) {
            return None;
        }
        let idx = self.knots.partition_point(|&k| k <= x);
        Some(idx - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.piece_index(x) {
            Some(i) => poly::eval(&self.coeffs[i], x - self.knots[i]),
            None => 0.0,
        }
    }

    /// n-th derivative, right-continuous at knots; `n` must not exceed the degree.
    pub fn eval_deriv(&self, n: usize, x: f64) -> f64 {
        match self.piece_index(x) {
            Some(i) => poly::eval(&poly::derivative(&self.coeffs[i], n), x - self.knots[i]),
            None => 0.0,
        }
    }

    /// Value of piece `i` at local coordinate `t`, including the endpoints.
    pub fn piece_value(&self, i: usize, t: f64) -> f64 {
        poly::eval(&self.coeffs[i], t)
    }

    pub fn integral(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| poly::integrate(c, self.knots[i + 1] - self.knots[i]))
            .sum()
    }

    fn shifted(&self, offset: f64) -> AxisPoly {
        AxisPoly {
            knots: self.knots.iter().map(|k| k + offset).collect(),
            coeffs: self.coeffs.clone(),
            rational: self.rational.clone(),
        }
    }

    /// `d^l/dw^l` of the Fourier transform `∫ p(x) e^{-j w x} dx`.
    pub fn fourier_deriv(&self, l: usize, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, c) in self.coeffs.iter().enumerate() {
            let a = self.knots[i];
            let w = self.knots[i + 1] - a;
            // x^l p(x - a) written in the local coordinate
            let q = poly::mul(&poly::binomial_power(a, l), c);
            let phase = Complex64::from_polar(1.0, -omega * a);
            acc += phase * local_fourier(&q, w, omega);
        }
        // (-j)^l
        let rot = match l % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
        rot * acc
    }

    /// `∫ p(x) p(x - k) dx`, exact up to rounding.
    pub fn autocorrelation(&self, k: f64) -> f64 {
        let mut acc = 0.0;
        for (i, ci) in self.coeffs.iter().enumerate() {
            let (ai, bi) = (self.knots[i], self.knots[i + 1]);
            for (j, cj) in self.coeffs.iter().enumerate() {
                let (aj, bj) = (self.knots[j] + k, self.knots[j + 1] + k);
                let lo = ai.max(aj);
                let hi = bi.min(bj);
                if hi <= lo {
                    continue;
                }
                let pi = poly::taylor_shift(ci, lo - ai);
                let pj = poly::taylor_shift(cj, lo - aj);
                acc += poly::integrate(&poly::mul(&pi, &pj), hi - lo);
            }
        }
        acc
    }
}

/// `∫_0^w q(t) e^{-j w t} dt` for a local polynomial `q`.
fn local_fourier(q: &[f64], w: f64, omega: f64) -> Complex64 {
    if (omega * w).abs() < 1.0 {
        // power series in omega; terms shrink like (omega w)^n / n!
        let mut acc = Complex64::new(0.0, 0.0);
        let mut factor = Complex64::new(1.0, 0.0);
        let jw = Complex64::new(0.0, -omega);
        for n in 0..40 {
            let moment: f64 = q
                .iter()
                .enumerate()
                .map(|(i, &qi)| qi * w.powi((n + i + 1) as i32) / (n + i + 1) as f64)
                .sum();
            let term = factor * moment;
            acc += term;
            if n > 4 && term.norm() < 1e-18 * acc.norm().max(1e-300) {
                break;
            }
            factor = factor * jw / (n as f64 + 1.0);
        }
        acc
    } else {
        // repeated integration by parts
        let jw = Complex64::new(0.0, omega);
        let end_phase = Complex64::from_polar(1.0, -omega * w);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut denom = jw;
        let mut d = q.to_vec();
        loop {
            let at0 = poly::eval(&d, 0.0);
            let atw = poly::eval(&d, w);
            acc += (Complex64::new(at0, 0.0) - end_phase * atw) / denom;
            if d.len() <= 1 {
                break;
            }
            d = poly::derivative(&d, 1);
            denom *= jw;
        }
        acc
    }
}

/// A compactly supported separable kernel on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolyKernel {
    axes: Vec<AxisPoly>,
}

#[derive(Serialize, Deserialize)]
struct KernelDoc {
    dim: usize,
    axes: Vec<AxisPoly>,
}

impl PiecewisePolyKernel {
    pub fn from_axis(axis: AxisPoly) -> Self {
        PiecewisePolyKernel { axes: vec![axis] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisPoly] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &AxisPoly {
        &self.axes[i]
    }

    /// Per-axis closed support intervals.
    pub fn support(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(AxisPoly::support).collect()
    }

    pub fn degree(&self) -> Vec<usize> {
        self.axes.iter().map(AxisPoly::degree).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut out = 1.0;
        for (axis, &xi) in self.axes.iter().zip(x) {
            out *= axis.eval(xi);
            if out == 0.0 {
                break;
            }
        }
        out
    }

    pub fn integral(&self) -> f64 {
        self.axes.iter().map(AxisPoly::integral).product()
    }

    /// Kernel translated by `offset`: `x -> phi(x - offset)`.
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        check_dim(self.dim(), offset.len())?;
        Ok(PiecewisePolyKernel {
            axes: self
                .axes
                .iter()
                .zip(offset)
                .map(|(a, &o)| a.shifted(o))
                .collect(),
        })
    }

    /// Kernel translated so that every axis support is symmetric about 0.
    pub fn centered(&self) -> Self {
        PiecewisePolyKernel {
            axes: self
                .axes
                .iter()
                .map(|a| {
                    let (lo, hi) = a.support();
                    a.shifted(-(lo + hi) / 2.0)
                })
                .collect(),
        }
    }

    pub fn spectrum(&self) -> KernelSpectrum<'_> {
        KernelSpectrum { kernel: self }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(KernelDoc {
            dim: self.dim(),
            axes: self.axes.clone(),
        })
        .expect("kernel document serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: KernelDoc =
            serde_json::from_value(value.clone()).map_err(|e| invalid("kernel", e.to_string()))?;
        check_dim(doc.dim, doc.axes.len())?;
        let axes = doc
            .axes
            .into_iter()
            .map(|a| {
                let mut checked = AxisPoly::new(a.knots, a.coeffs)?;
                checked.rational = a.rational;
                Ok(checked)
            })
            .collect::<Result<Vec<_>>>()?;
        if axes.is_empty() {
            return Err(Error::EmptyTensorProduct);
        }
        Ok(PiecewisePolyKernel { axes })
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Causal B-spline of the given order (degree `order - 1`), supported on `[0, order]`.
pub fn bspline(order: usize) -> Result<PiecewisePolyKernel> {
    if order == 0 || order > MAX_BSPLINE_ORDER {
        return Err(Error::InvalidOrder(order));
    }
    let exact = bspline_rational(order);
    let coeffs = exact
        .iter()
        .map(|piece| piece.iter().map(ratio_to_f64).collect())
        .collect();
    let knots = (0..=order).map(|k| k as f64).collect();
    let mut axis = AxisPoly::new(knots, coeffs)?;
    if order <= RATIONAL_MAX_ORDER {
        axis.rational = Some(
            exact
                .iter()
                .map(|piece| {
                    piece
                        .iter()
                        .map(|r| [*r.numer() as i64, *r.denom() as i64])
                        .collect()
                })
                .collect(),
        );
    }
    Ok(PiecewisePolyKernel::from_axis(axis))
}

fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Pieces of the order-`order` B-spline on `[j, j+1]`, exact.
fn bspline_rational(order: usize) -> Vec<Vec<Rational>> {
    let zero = Rational::from_integer(0);
    let mut pieces: Vec<Vec<Rational>> = vec![vec![Rational::from_integer(1)]];
    for _ in 1..order {
        // beta_{n}(j + t) = ∫_{j-1+t}^{j+t} beta_{n-1}
        //                 = (A_{j-1}(1) - A_{j-1}(t)) + A_j(t)
        let anti: Vec<Vec<Rational>> = pieces
            .iter()
            .map(|c| {
                let mut a = vec![zero];
                a.extend(
                    c.iter()
                        .enumerate()
                        .map(|(i, ci)| *ci / Rational::from_integer(i as i128 + 1)),
                );
                a
            })
            .collect();
        let len = anti[0].len();
        let mut next = Vec::with_capacity(pieces.len() + 1);
        for j in 0..=pieces.len() {
            let mut c = vec![zero; len];
            if j >= 1 {
                let prev = &anti[j - 1];
                let at_one = prev.iter().fold(zero, |acc, v| acc + *v);
                c[0] += at_one;
                for (ci, pi) in c.iter_mut().zip(prev) {
                    *ci -= *pi;
                }
            }
            if j < anti.len() {
                for (ci, ai) in c.iter_mut().zip(&anti[j]) {
                    *ci += *ai;
                }
            }
            next.push(c);
        }
        pieces = next;
    }
    pieces
}

/// Separable kernel whose axes are the given 1-D kernels.
pub fn tensor_product(axes: &[PiecewisePolyKernel]) -> Result<PiecewisePolyKernel> {
    if axes.is_empty() {
        return Err(Error::EmptyTensorProduct);
    }
    let mut out = Vec::with_capacity(axes.len());
    for k in axes {
        check_dim(1, k.dim())?;
        out.push(k.axes[0].clone());
    }
    Ok(PiecewisePolyKernel { axes: out })
}

/// Partial derivative `∂^l phi(x)`.
pub fn eval_deriv(kernel: &PiecewisePolyKernel, l: &[usize], x: &[f64]) -> Result<f64> {
    check_dim(kernel.dim(), l.len())?;
    check_dim(kernel.dim(), x.len())?;
    let mut out = 1.0;
    for (axis_idx, ((axis, &li), &xi)) in kernel.axes.iter().zip(l).zip(x).enumerate() {
        let degree = axis.degree();
        if li > degree {
            return Err(Error::DerivativeOrder {
                axis: axis_idx,
                order: li,
                degree,
            });
        }
        out *= axis.eval_deriv(li, xi);
    }
    Ok(out)
}

/// Fourier-domain view of a kernel, `phi^(w) = ∫ phi(x) e^{-j<w,x>} dx`.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpectrum<'a> {
    kernel: &'a PiecewisePolyKernel,
}

impl KernelSpectrum<'_> {
    pub fn value(&self, omega: &[f64]) -> Complex64 {
        self.partial(&vec![0; omega.len()], omega)
    }

    pub fn partial(&self, l: &[usize], omega: &[f64]) -> Complex64 {
        self.kernel
            .axes
            .iter()
            .zip(l)
            .zip(omega)
            .map(|((axis, &li), &w)| axis.fourier_deriv(li, w))
            .product()
    }

    /// Periodized power spectrum `Σ_k |phi^(w + 2πk)|^2` truncated at `‖k‖∞ <= radius`.
    pub fn periodized_power(&self, omega: &[f64], radius: i64) -> f64 {
        // separable: product of per-axis sums
        self.kernel
            .axes
            .iter()
            .zip(omega)
            .map(|(axis, &w)| {
                (-radius..=radius)
                    .map(|k| axis.fourier_deriv(0, w + 2.0 * std::f64::consts::PI * k as f64).norm_sqr())
                    .sum::<f64>()
            })
            .product()
    }
}

/// Sequence `a[k] = ∫ phi(x) phi(x - k) dx` for `‖k‖∞ <= radius`.
pub fn autocorrelation_sequence(kernel: &PiecewisePolyKernel, radius: usize) -> DiscreteFilter {
    let factors = kernel
        .axes
        .iter()
        .map(|axis| {
            let half: Vec<f64> = (0..=radius).map(|k| axis.autocorrelation(k as f64)).collect();
            let mut values = Vec::with_capacity(2 * radius + 1);
            values.extend(half.iter().skip(1).rev());
            values.extend(half.iter());
            DiscreteFilter::from_dense_1d(-(radius as i64), values)
        })
        .collect();
    DiscreteFilter::separable(factors)
}

/// Largest `L <= max_order` for which the kernel satisfies the Strang-Fix
/// conditions of order `L`, checked on `0 < ‖k‖∞ <= STRANG_FIX_KMAX`.
pub fn strang_fix_order(kernel: &PiecewisePolyKernel, max_order: usize, tol: f64) -> usize {
    strang_fix_order_with(kernel, max_order, tol, STRANG_FIX_KMAX)
}

pub fn strang_fix_order_with(
    kernel: &PiecewisePolyKernel,
    max_order: usize,
    tol: f64,
    kmax: i64,
) -> usize {
    // the conditions are translation invariant; centering keeps the moments small
    let centered = kernel.centered();
    let spectrum = centered.spectrum();
    let dim = kernel.dim();
    if spectrum.value(&vec![0.0; dim]).norm() <= tol {
        return 0;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let lattice: Vec<Vec<f64>> = multiindex::lattice_box(dim, kmax)
        .into_iter()
        .filter(|k| k.iter().any(|&v| v != 0))
        .map(|k| k.iter().map(|&v| two_pi * v as f64).collect())
        .collect();
    for order in 1..=max_order {
        let level = order - 1;
        for l in multiindex::with_order(dim, level) {
            if lattice.iter().any(|w| spectrum.partial(&l, w).norm() > tol) {
                return order - 1;
            }
        }
    }
    max_order
}

/// Reproduction residual reported together with the lattice truncation used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproductionResidual {
    pub residual: f64,
    pub truncation: usize,
}

/// `max_x |Σ_{‖k‖∞<=K} k^l phi_int(x - k) - x^l|` with `phi_int = Σ a[m] phi(· - m)`.
pub fn polynomial_reproduction_residual(
    kernel: &PiecewisePolyKernel,
    prefilter: &DiscreteFilter,
    l: &[usize],
    grid: &[Vec<f64>],
    truncation: usize,
) -> Result<ReproductionResidual> {
    let dim = kernel.dim();
    check_dim(dim, l.len())?;
    check_dim(dim, prefilter.dim())?;
    let k = truncation as i64;
    // Σ_k k^l phi_int(x-k) = Σ_n b[n] phi(x-n) with b = (k^l 1_{|k|<=K}) * a
    let monomial_factors = l
        .iter()
        .map(|&li| {
            let values = (-k..=k).map(|v| (v as f64).powi(li as i32)).collect();
            DiscreteFilter::from_dense_1d(-k, values)
        })
        .collect();
    let b = DiscreteFilter::separable(monomial_factors).convolve(prefilter)?;
    let support = kernel.support();
    let mut residual: f64 = 0.0;
    for x in grid {
        check_dim(dim, x.len())?;
        let mut value = 0.0;
        for (n, bn) in b.entries() {
            // skip shifts whose support misses x
            let hits = n
                .iter()
                .zip(x)
                .zip(&support)
                .all(|((&ni, &xi), &(lo, hi))| xi - ni as f64 >= lo && xi - (ni as f64) < hi);
            if hits {
                let shifted: Vec<f64> = x.iter().zip(n).map(|(&xi, &ni)| xi - ni as f64).collect();
                value += bn * kernel.eval(&shifted);
            }
        }
        let target: f64 = x.iter().zip(l).map(|(&xi, &li)| xi.powi(li as i32)).product();
        residual = residual.max((value - target).abs());
    }
    Ok(ReproductionResidual {
        residual,
        truncation,
    })
}

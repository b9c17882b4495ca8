//! Test signals with closed-form partial derivatives and declared growth.
//!
//! Every family is addressable by a serializable [`SignalSpec`], which is what
//! reports record and what configuration files name.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jet::{sobolev_weight, Jet};
use crate::multiindex;
use crate::poly::binomial;

/// Highest partial-derivative order provided by the library.
pub const MAX_DERIVATIVE_ORDER: usize = 8;

/// Declared pointwise bound `|f(x)| <= C ⟨x⟩^order`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Growth {
    Polynomial { order: f64, constant: Option<f64> },
    Compact,
}

impl Growth {
    pub fn polynomial(order: f64) -> Self {
        Growth::Polynomial {
            order,
            constant: None,
        }
    }
}

pub trait Signal: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn max_order(&self) -> usize {
        MAX_DERIVATIVE_ORDER
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64>;

    /// All `∂^l f(x)` with `|l| = n`, ordered as [`multiindex::with_order`].
    fn partials(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        multiindex::with_order(self.dim(), n)
            .iter()
            .map(|l| self.partial(l, x))
            .collect()
    }

    fn growth(&self) -> Growth;

    fn spec(&self) -> SignalSpec;

    /// Exact `D^r f`, when the family has a spectral form.
    fn fractional(&self, _r: f64) -> Option<Arc<dyn Signal>> {
        None
    }
}

fn check_order(signal: &dyn Signal, n: usize) -> Result<()> {
    if n > signal.max_order() {
        return Err(Error::MissingPartials {
            requested: n,
            available: signal.max_order(),
        });
    }
    Ok(())
}

fn check_point<T>(dim: usize, x: &[T]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.len(),
        });
    }
    Ok(())
}

fn bracket(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Phase shared by the oscillating families: `x_1 + 0.3 Σ_{i>=2} x_i`.
fn phase(x: &[f64]) -> f64 {
    x[0] + 0.3 * x[1..].iter().sum::<f64>()
}

fn phase_jet(order: usize, x: &[f64], first: f64) -> Jet {
    let vars = Jet::point(order, x);
    let mut out = vars[0].scale(first);
    for v in &vars[1..] {
        out = out.add(&v.scale(0.3));
    }
    out
}

/// Rounds to 15 significant digits so stored coefficients are portable.
fn round15(v: f64) -> f64 {
    format!("{v:.14e}").parse().expect("formatted float parses")
}

/// `⟨x⟩^β sin((ω0 + 0.3) x_1 + 0.3 Σ_{i>=2} x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowingOscillation {
    dim: usize,
    beta: f64,
    omega0: f64,
}

pub fn make_growing_oscillation(beta: f64, omega0: f64) -> Result<GrowingOscillation> {
    make_growing_oscillation_nd(1, beta, omega0)
}

pub fn make_growing_oscillation_nd(dim: usize, beta: f64, omega0: f64) -> Result<GrowingOscillation> {
    if !(beta >= 0.0) {
        return Err(invalid("beta", "growth order must be non-negative"));
    }
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    Ok(GrowingOscillation { dim, beta, omega0 })
}

impl GrowingOscillation {
    fn jet(&self, order: usize, x: &[f64]) -> Jet {
        let w = sobolev_weight(order, x, self.beta);
        w.mul(&phase_jet(order, x, self.omega0 + 0.3).sin())
    }
}

impl Signal for GrowingOscillation {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let arg = self.omega0 * x[0] + 0.3 * x.iter().sum::<f64>();
        bracket(x).powf(self.beta) * arg.sin()
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64> {
        check_point(self.dim, x)?;
        check_point(self.dim, l)?;
        let n = l.iter().sum();
        check_order(self, n)?;
        Ok(self.jet(n, x).partial(l))
    }

    fn partials(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_point(self.dim, x)?;
        check_order(self, n)?;
        Ok(self.jet(n, x).partials_of_order(n))
    }

    fn growth(&self) -> Growth {
        Growth::Polynomial {
            order: self.beta,
            constant: Some(1.0),
        }
    }

    fn spec(&self) -> SignalSpec {
        SignalSpec::GrowingOscillation {
            dim: self.dim,
            beta: self.beta,
            omega0: self.omega0,
        }
    }
}

/// `⟨x⟩^β Σ_k (a_k / k^s) sin(k θ + φ_k)` with seeded `a_k` and `φ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomTrigPoly {
    dim: usize,
    seed: u64,
    beta: f64,
    smoothness: f64,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

pub const DEFAULT_SMOOTHNESS: f64 = 2.0;

pub fn make_random_trig_poly(seed: u64, terms: usize, beta: f64) -> Result<RandomTrigPoly> {
    make_random_trig_poly_nd(1, seed, terms, beta, DEFAULT_SMOOTHNESS)
}

pub fn make_random_trig_poly_nd(
    dim: usize,
    seed: u64,
    terms: usize,
    beta: f64,
    smoothness: f64,
) -> Result<RandomTrigPoly> {
    if terms == 0 {
        return Err(invalid("terms", "need at least one term"));
    }
    if !(beta >= 0.0) {
        return Err(invalid("beta", "growth order must be non-negative"));
    }
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amplitudes = Vec::with_capacity(terms);
    let mut phases = Vec::with_capacity(terms);
    for _ in 0..terms {
        amplitudes.push(round15(rng.gen_range(-1.0..=1.0)));
        phases.push(round15(rng.gen_range(0.0..2.0 * PI)));
    }
    Ok(RandomTrigPoly {
        dim,
        seed,
        beta,
        smoothness,
        amplitudes,
        phases,
    })
}

impl RandomTrigPoly {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// n-th derivative of the trigonometric sum in θ.
    fn trig_derivative(&self, n: usize, theta: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| {
                let k = (i + 1) as f64;
                a * k.powf(n as f64 - self.smoothness)
                    * (k * theta + p + n as f64 * PI / 2.0).sin()
            })
            .sum()
    }

    fn jet(&self, order: usize, x: &[f64]) -> Jet {
        let theta = phase_jet(order, x, 1.0);
        let t0 = theta.value();
        let derivs: Vec<f64> = (0..=order).map(|n| self.trig_derivative(n, t0)).collect();
        sobolev_weight(order, x, self.beta).mul(&theta.compose(&derivs))
    }
}

impl Signal for RandomTrigPoly {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        bracket(x).powf(self.beta) * self.trig_derivative(0, phase(x))
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64> {
        check_point(self.dim, x)?;
        check_point(self.dim, l)?;
        let n = l.iter().sum();
        check_order(self, n)?;
        Ok(self.jet(n, x).partial(l))
    }

    fn partials(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_point(self.dim, x)?;
        check_order(self, n)?;
        Ok(self.jet(n, x).partials_of_order(n))
    }

    fn growth(&self) -> Growth {
        let constant = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| a.abs() / ((i + 1) as f64).powf(self.smoothness))
            .sum();
        Growth::Polynomial {
            order: self.beta,
            constant: Some(constant),
        }
    }

    fn spec(&self) -> SignalSpec {
        SignalSpec::RandomTrigPoly {
            dim: self.dim,
            seed: self.seed,
            terms: self.amplitudes.len(),
            beta: self.beta,
            smoothness: self.smoothness,
        }
    }
}

/// Polynomial `Σ c_a x^a` of total degree at most 8.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Vec<usize>, f64)>,
}

pub fn make_polynomial(dim: usize, terms: Vec<(Vec<usize>, f64)>) -> Result<Polynomial> {
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    for (a, _) in &terms {
        check_point(dim, a)?;
        if a.iter().sum::<usize>() > MAX_DERIVATIVE_ORDER {
            return Err(invalid("terms", "total degree must not exceed 8"));
        }
    }
    Ok(Polynomial { dim, terms })
}

impl Polynomial {
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(a, _)| a.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

fn falling(a: usize, l: usize) -> f64 {
    ((a - l + 1)..=a).map(|v| v as f64).product()
}

impl Signal for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&ai, &xi)| xi.powi(ai as i32)).product::<f64>())
            .sum()
    }

    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64> {
        check_point(self.dim, x)?;
        check_point(self.dim, l)?;
        Ok(self
            .terms
            .iter()
            .filter(|(a, _)| a.iter().zip(l).all(|(ai, li)| ai >= li))
            .map(|(a, c)| {
                c * a
                    .iter()
                    .zip(l)
                    .zip(x)
                    .map(|((&ai, &li), &xi)| falling(ai, li) * xi.powi((ai - li) as i32))
                    .product::<f64>()
            })
            .sum())
    }

    fn growth(&self) -> Growth {
        // |x^a| <= ⟨x⟩^{|a|} <= ⟨x⟩^degree
        Growth::Polynomial {
            order: self.degree() as f64,
            constant: Some(self.terms.iter().map(|(_, c)| c.abs()).sum()),
        }
    }

    fn spec(&self) -> SignalSpec {
        SignalSpec::Polynomial {
            dim: self.dim,
            terms: self.terms.clone(),
        }
    }
}

/// `exp(sin(x_1 + 0.3 Σ_{i>=2} x_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSin {
    dim: usize,
}

pub fn make_exp_sin(dim: usize) -> Result<ExpSin> {
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    Ok(ExpSin { dim })
}

impl ExpSin {
    fn jet(&self, order: usize, x: &[f64]) -> Jet {
        phase_jet(order, x, 1.0).sin().exp()
    }
}

impl Signal for ExpSin {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        phase(x).sin().exp()
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64> {
        check_point(self.dim, x)?;
        check_point(self.dim, l)?;
        let n = l.iter().sum();
        check_order(self, n)?;
        Ok(self.jet(n, x).partial(l))
    }

    fn partials(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_point(self.dim, x)?;
        check_order(self, n)?;
        Ok(self.jet(n, x).partials_of_order(n))
    }

    fn growth(&self) -> Growth {
        Growth::Polynomial {
            order: 0.0,
            constant: Some(std::f64::consts::E),
        }
    }

    fn spec(&self) -> SignalSpec {
        SignalSpec::ExpSin { dim: self.dim }
    }
}

/// One term `P(x) e^{j<ω,x>}` of a spectral signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTerm {
    pub omega: Vec<f64>,
    /// Envelope monomials `(exponent, [re, im])`.
    pub envelope: Vec<(Vec<usize>, [f64; 2])>,
}

impl SpectralTerm {
    fn coefficients(&self) -> impl Iterator<Item = (&Vec<usize>, Complex64)> + '_ {
        self.envelope.iter().map(|(a, c)| (a, Complex64::new(c[0], c[1])))
    }

    fn degree(&self) -> usize {
        self.envelope.iter().map(|(a, _)| a.iter().sum()).max().unwrap_or(0)
    }

    /// `D^r` of this term, exact: the multiplier's derivatives at ω act on the envelope.
    fn fractional(&self, r: f64) -> SpectralTerm {
        let dim = self.omega.len();
        let multiplier = sobolev_weight(self.degree(), &self.omega, r);
        let mut out: Vec<(Vec<usize>, Complex64)> = Vec::new();
        for (n, c) in self.coefficients() {
            for i in multiindex::up_to_order(dim, n.iter().sum()) {
                if i.iter().zip(n).any(|(ii, ni)| ii > ni) {
                    continue;
                }
                let binom: f64 = i.iter().zip(n).map(|(&ii, &ni)| binomial(ni, ii)).product();
                let order: usize = i.iter().sum();
                // (-j)^{|i|}
                let rot = Complex64::new(0.0, -1.0).powu(order as u32);
                let term = c * rot * binom * multiplier.partial(&i);
                let exponent: Vec<usize> = n.iter().zip(&i).map(|(ni, ii)| ni - ii).collect();
                match out.iter_mut().find(|(a, _)| *a == exponent) {
                    Some((_, v)) => *v += term,
                    None => out.push((exponent, term)),
                }
            }
        }
        SpectralTerm {
            omega: self.omega.clone(),
            envelope: out.into_iter().map(|(a, c)| (a, [c.re, c.im])).collect(),
        }
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Complex64 {
        let phase: f64 = self.omega.iter().zip(x).map(|(w, xi)| w * xi).sum();
        let carrier = Complex64::from_polar(1.0, phase);
        let mut acc = Complex64::new(0.0, 0.0);
        let dim = l.len();
        // Leibniz: Σ_{a<=l} C(l,a) ∂^a P (jω)^{l-a}
        for a in multiindex::up_to_order(dim, l.iter().sum()) {
            if a.iter().zip(l).any(|(ai, li)| ai > li) {
                continue;
            }
            let binom: f64 = a.iter().zip(l).map(|(&ai, &li)| binomial(li, ai)).product();
            let mut freq = Complex64::new(1.0, 0.0);
            for ((&ai, &li), &w) in a.iter().zip(l).zip(&self.omega) {
                freq *= Complex64::new(0.0, w).powu((li - ai) as u32);
            }
            let mut envelope = Complex64::new(0.0, 0.0);
            for (n, c) in self.coefficients() {
                if n.iter().zip(&a).any(|(ni, ai)| ni < ai) {
                    continue;
                }
                let mono: f64 = n
                    .iter()
                    .zip(&a)
                    .zip(x)
                    .map(|((&ni, &ai), &xi)| falling(ni, ai) * xi.powi((ni - ai) as i32))
                    .product();
                envelope += c * mono;
            }
            acc += envelope * freq * binom;
        }
        acc * carrier
    }
}

/// `Re Σ_t P_t(x) e^{j<ω_t,x>}`; fractional derivatives are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral {
    dim: usize,
    seed: Option<u64>,
    fractional_order: f64,
    terms: Vec<SpectralTerm>,
}

pub fn make_spectral(dim: usize, seed: u64, terms: usize, degree: usize) -> Result<Spectral> {
    if terms == 0 {
        return Err(invalid("terms", "need at least one term"));
    }
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    if degree > MAX_DERIVATIVE_ORDER {
        return Err(invalid("degree", "envelope degree must not exceed 8"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(terms);
    for t in 0..terms {
        let omega: Vec<f64> = (0..dim)
            .map(|axis| {
                if axis == 0 {
                    round15(rng.gen_range(0.5..2.0))
                } else {
                    round15(rng.gen_range(-1.0..1.0))
                }
            })
            .collect();
        let scale = 1.0 / (t + 1) as f64;
        let envelope = multiindex::up_to_order(dim, degree)
            .into_iter()
            .map(|a| {
                let re = round15(scale * rng.gen_range(-1.0..=1.0));
                let im = round15(scale * rng.gen_range(-1.0..=1.0));
                (a, [re, im])
            })
            .collect();
        out.push(SpectralTerm { omega, envelope });
    }
    Ok(Spectral {
        dim,
        seed: Some(seed),
        fractional_order: 0.0,
        terms: out,
    })
}

pub fn spectral_from_terms(terms: Vec<SpectralTerm>) -> Result<Spectral> {
    let dim = terms.first().map(|t| t.omega.len()).ok_or_else(|| invalid("terms", "need at least one term"))?;
    for t in &terms {
        check_point(dim, &t.omega)?;
        for (a, _) in &t.envelope {
            check_point(dim, a)?;
        }
    }
    Ok(Spectral {
        dim,
        seed: None,
        fractional_order: 0.0,
        terms,
    })
}

impl Spectral {
    pub fn terms(&self) -> &[SpectralTerm] {
        &self.terms
    }

    pub fn apply_fractional(&self, r: f64) -> Spectral {
        Spectral {
            dim: self.dim,
            seed: self.seed,
            fractional_order: self.fractional_order + r,
            terms: self.terms.iter().map(|t| t.fractional(r)).collect(),
        }
    }
}

impl Signal for Spectral {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let zero = vec![0; self.dim];
        self.terms.iter().map(|t| t.partial(&zero, x).re).sum()
    }

    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn partial(&self, l: &[usize], x: &[f64]) -> Result<f64> {
        check_point(self.dim, x)?;
        check_point(self.dim, l)?;
        Ok(self.terms.iter().map(|t| t.partial(l, x).re).sum())
    }

    fn growth(&self) -> Growth {
        let degree = self.terms.iter().map(SpectralTerm::degree).max().unwrap_or(0);
        let constant = self
            .terms
            .iter()
            .flat_map(|t| t.coefficients().map(|(_, c)| c.norm()))
            .sum();
        Growth::Polynomial {
            order: degree as f64,
            constant: Some(constant),
        }
    }

    fn spec(&self) -> SignalSpec {
        match self.seed {
            Some(seed) => SignalSpec::Spectral {
                dim: self.dim,
                seed,
                terms: self.terms.len(),
                degree: self.terms.iter().map(SpectralTerm::degree).max().unwrap_or(0),
                fractional: (self.fractional_order != 0.0).then_some(self.fractional_order),
            },
            None => SignalSpec::SpectralTerms {
                terms: self.terms.clone(),
            },
        }
    }

    fn fractional(&self, r: f64) -> Option<Arc<dyn Signal>> {
        Some(Arc::new(self.apply_fractional(r)))
    }
}

fn default_dim() -> usize {
    1
}

fn default_smoothness() -> f64 {
    DEFAULT_SMOOTHNESS
}

/// Serializable description of a library signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SignalSpec {
    GrowingOscillation {
        #[serde(default = "default_dim")]
        dim: usize,
        beta: f64,
        omega0: f64,
    },
    RandomTrigPoly {
        #[serde(default = "default_dim")]
        dim: usize,
        seed: u64,
        terms: usize,
        beta: f64,
        #[serde(default = "default_smoothness")]
        smoothness: f64,
    },
    Polynomial {
        #[serde(default = "default_dim")]
        dim: usize,
        terms: Vec<(Vec<usize>, f64)>,
    },
    ExpSin {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Spectral {
        #[serde(default = "default_dim")]
        dim: usize,
        seed: u64,
        terms: usize,
        degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fractional: Option<f64>,
    },
    SpectralTerms {
        terms: Vec<SpectralTerm>,
    },
}

impl SignalSpec {
    pub fn build(&self) -> Result<Arc<dyn Signal>> {
        Ok(match self {
            SignalSpec::GrowingOscillation { dim, beta, omega0 } => {
                Arc::new(make_growing_oscillation_nd(*dim, *beta, *omega0)?)
            }
            SignalSpec::RandomTrigPoly {
                dim,
                seed,
                terms,
                beta,
                smoothness,
            } => Arc::new(make_random_trig_poly_nd(*dim, *seed, *terms, *beta, *smoothness)?),
            SignalSpec::Polynomial { dim, terms } => Arc::new(make_polynomial(*dim, terms.clone())?),
            SignalSpec::ExpSin { dim } => Arc::new(make_exp_sin(*dim)?),
            SignalSpec::Spectral {
                dim,
                seed,
                terms,
                degree,
                fractional,
            } => {
                let s = make_spectral(*dim, *seed, *terms, *degree)?;
                match fractional {
                    Some(r) => Arc::new(s.apply_fractional(*r)),
                    None => Arc::new(s),
                }
            }
            SignalSpec::SpectralTerms { terms } => Arc::new(spectral_from_terms(terms.clone())?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SignalSpec::GrowingOscillation { dim, .. }
            | SignalSpec::RandomTrigPoly { dim, .. }
            | SignalSpec::Polynomial { dim, .. }
            | SignalSpec::ExpSin { dim }
            | SignalSpec::Spectral { dim, .. } => *dim,
            SignalSpec::SpectralTerms { terms } => terms.first().map_or(0, |t| t.omega.len()),
        }
    }

    /// Replaces the seed of seeded families.
    pub fn with_seed(&self, new_seed: u64) -> SignalSpec {
        let mut out = self.clone();
        match &mut out {
            SignalSpec::RandomTrigPoly { seed, .. } | SignalSpec::Spectral { seed, .. } => *seed = new_seed,
            _ => {}
        }
        out
    }
}

/// Largest gap between analytic partials of order `1..=max_order` and a
/// fourth-order central difference of the analytic partial one order lower.
pub fn derivative_consistency(
    signal: &dyn Signal,
    points: &[Vec<f64>],
    max_order: usize,
    step: f64,
) -> Result<f64> {
    let dim = signal.dim();
    let mut worst: f64 = 0.0;
    for x in points {
        for n in 1..=max_order.min(signal.max_order()) {
            for l in multiindex::with_order(dim, n) {
                let axis = l.iter().position(|&v| v > 0).unwrap();
                let mut lower = l.clone();
                lower[axis] -= 1;
                let at = |offset: f64| -> Result<f64> {
                    let mut y = x.clone();
                    y[axis] += offset;
                    signal.partial(&lower, &y)
                };
                let fd = (-at(2.0 * step)? + 8.0 * at(step)? - 8.0 * at(-step)? + at(-2.0 * step)?)
                    / (12.0 * step);
                worst = worst.max((fd - signal.partial(&l, x)?).abs());
            }
        }
    }
    Ok(worst)
}

/// Max of `|f| / ⟨x⟩^β` over the shell `T - 1 <= ‖x‖∞ <= T`.
pub fn growth_shell_ratio(signal: &dyn Signal, half_width: f64, samples_per_unit: usize) -> f64 {
    let beta = match signal.growth() {
        Growth::Polynomial { order, .. } => order,
        Growth::Compact => 0.0,
    };
    let dim = signal.dim();
    let n = (2.0 * half_width * samples_per_unit as f64).round() as usize + 1;
    let step = 2.0 * half_width / (n - 1) as f64;
    let inner = half_width - 1.0;
    let mut worst: f64 = 0.0;
    let mut idx = vec![0usize; dim];
    let total = n.pow(dim as u32);
    // full tensor sweep is fine at desk scale for d <= 2
    for flat in 0..total {
        let mut f = flat;
        for axis in (0..dim).rev() {
            idx[axis] = f % n;
            f /= n;
        }
        let x: Vec<f64> = idx.iter().map(|&i| -half_width + i as f64 * step).collect();
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm < inner {
            continue;
        }
        worst = worst.max(signal.value(&x).abs() / bracket(&x).powf(beta));
    }
    worst
}

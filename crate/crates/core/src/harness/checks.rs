//! Identity suites: Peano kernel identity, the directional-derivative bound,
//! polynomial reproduction, the interpolating property, filter compositions,
//! and scaling of sampled smoothed signals.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::report::{self, CheckReport, SuiteResult};
use crate::dfilter::{self, DiscreteFilter, DEFAULT_GRID};
use crate::error::Result;
use crate::kernel::{autocorrelation_sequence, bspline, polynomial_reproduction_residual, PiecewisePolyKernel};
use crate::multiindex;
use crate::operators::{directional_derivative, finite_difference, smooth};
use crate::quad::gauss_legendre_unit;
use crate::signals::{
    make_exp_sin, make_growing_oscillation_nd, make_polynomial, make_random_trig_poly_nd, make_spectral, Signal,
    MAX_DERIVATIVE_ORDER,
};
use crate::spaces::{weighted_lp_norm, weighted_sequence_norm, GridGeometry, GridSignal, WeightSign, WeightedNormSpec};

pub const PEANO_TOL: f64 = 1e-8;
pub const REPRODUCTION_TOL: f64 = 1e-6;
pub const INTERPOLATING_TOL: f64 = 1e-9;
pub const COMPOSITION_TOL: f64 = 1e-10;
pub const SCALING_VARIATION_LIMIT: f64 = 0.5;
/// Relative slack for rounding in the directional-derivative bound.
pub const BOUND_SLACK: f64 = 1e-12;

fn uniform(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-r..r)).collect()
}

/// `max |Δ_u^L f(x) - ∫ D_u^L f(x - t u) β^{L-1}(t) dt|` over random draws.
pub fn peano_residual(f: &dyn Signal, order: usize, draws: usize, seed: u64) -> Result<f64> {
    let dim = f.dim();
    let spline = bspline(order)?;
    let (nodes, weights) = gauss_legendre_unit(20);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let x = uniform(&mut rng, dim, 5.0);
        let u = uniform(&mut rng, dim, 1.0);
        let lhs = finite_difference(&|y: &[f64]| f.value(y), &u, order, &x);
        let mut rhs = 0.0;
        for piece in 0..order {
            for (t, w) in nodes.iter().zip(&weights) {
                let s = piece as f64 + t;
                let y: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi - s * ui).collect();
                rhs += w * directional_derivative(f, &u, order, &y)? * spline.axis(0).piece_value(piece, *t);
            }
        }
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Outcome of sampling the directional-derivative bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSample {
    pub draws: usize,
    /// Draws with `|D_u^L f(x)| > ‖u‖_∞^L Σ_{|l|=L} |∂^l f(x)|`.
    pub violations: usize,
    /// Draws violating the multinomially weighted bound `‖u‖_∞^L Σ (L!/l!) |∂^l f(x)|`.
    pub weighted_violations: usize,
    /// Largest `|D_u^L f| / (‖u‖_∞^L f^{(L)})`.
    pub worst_ratio: f64,
    pub first_violation: Option<String>,
}

fn random_signal(rng: &mut ChaCha8Rng, dim: usize, order: usize) -> Result<(String, Arc<dyn Signal>)> {
    Ok(match rng.gen_range(0..5) {
        0 => {
            let beta = rng.gen_range(0.0..2.0);
            let omega = rng.gen_range(0.5..2.0);
            (
                format!("growing_oscillation(beta = {beta:.3}, omega0 = {omega:.3})"),
                Arc::new(make_growing_oscillation_nd(dim, beta, omega)?),
            )
        }
        1 => {
            let seed = rng.gen();
            let terms = rng.gen_range(1..=6);
            let beta = rng.gen_range(0.0..2.0);
            (
                format!("random_trig_poly(seed = {seed}, terms = {terms})"),
                Arc::new(make_random_trig_poly_nd(dim, seed, terms, beta, 2.0)?),
            )
        }
        2 => ("exp_sin".into(), Arc::new(make_exp_sin(dim)?)),
        3 => {
            let degree = (order + 1).min(MAX_DERIVATIVE_ORDER);
            let terms = multiindex::up_to_order(dim, degree)
                .into_iter()
                .map(|l| (l, rng.gen_range(-1.0..1.0)))
                .collect();
            ("polynomial".into(), Arc::new(make_polynomial(dim, terms)?))
        }
        _ => {
            let seed = rng.gen();
            ("spectral".into(), Arc::new(make_spectral(dim, seed, 3, 1)?))
        }
    })
}

/// Samples `|D_u^L f(x)| <= ‖u‖_∞^L f^{(L)}(x)` over library signals.
pub fn sample_direction_bound(dim: usize, order: usize, draws: usize, seed: u64) -> Result<BoundSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = multiindex::with_order(dim, order);
    let mut out = BoundSample {
        draws,
        violations: 0,
        weighted_violations: 0,
        worst_ratio: 0.0,
        first_violation: None,
    };
    for _ in 0..draws {
        let (name, f) = random_signal(&mut rng, dim, order)?;
        let x = uniform(&mut rng, dim, 10.0);
        let u = uniform(&mut rng, dim, 1.0);
        let lhs = directional_derivative(f.as_ref(), &u, order, &x)?.abs();
        let partials = f.partials(order, &x)?;
        let norm_u = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).powi(order as i32);
        let magnitude: f64 = partials.iter().map(|v| v.abs()).sum();
        let weighted: f64 = indices
            .iter()
            .zip(&partials)
            .map(|(l, v)| multiindex::multinomial(l) * v.abs())
            .sum();
        let bound = norm_u * magnitude;
        if bound > 0.0 {
            out.worst_ratio = out.worst_ratio.max(lhs / bound);
        }
        if lhs > bound * (1.0 + BOUND_SLACK) {
            out.violations += 1;
            if out.first_violation.is_none() {
                out.first_violation = Some(format!(
                    "{name} at x = {x:?}, u = {u:?}: |D_u^{order} f| = {lhs:.6e} > {bound:.6e}"
                ));
            }
        }
        if lhs > norm_u * weighted * (1.0 + BOUND_SLACK) {
            out.weighted_violations += 1;
        }
    }
    Ok(out)
}

/// Largest `|(a * b)[k] - δ[k]|` over the support of the product.
pub fn composition_defect(a: &DiscreteFilter, b: &DiscreteFilter) -> Result<f64> {
    let c = a.convolve(b)?;
    let dim = c.dim();
    let zero = vec![0i64; dim];
    let mut worst = (c.get(&zero) - 1.0).abs();
    for (k, v) in c.entries() {
        if *k != zero {
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

/// `max_{‖k‖∞ <= radius} |Σ_n a[n] φ(k - n) - δ[k]|`.
pub fn interpolating_defect(kernel: &PiecewisePolyKernel, a: &DiscreteFilter, radius: i64) -> f64 {
    let dim = kernel.dim();
    let mut worst: f64 = 0.0;
    for k in multiindex::lattice_box(dim, radius) {
        let value: f64 = a
            .entries()
            .map(|(n, v)| {
                let x: Vec<f64> = k.iter().zip(n).map(|(ki, ni)| (ki - ni) as f64).collect();
                v * kernel.eval(&x)
            })
            .sum();
        let target = if k.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
        worst = worst.max((value - target).abs());
    }
    worst
}

/// Per `h`: `h^{d/p} ‖(J_h f)(h·)‖_{ℓ_{p,-α}} / ‖f‖_{L_{p,-α}}`.
pub fn smoothed_sample_scaling(config: &ExperimentConfig) -> Result<Vec<f64>> {
    let signal = config.signal.build()?;
    let d = config.dim();
    let m = config.refinement;
    let order = config.order();
    let coarse = GridGeometry::new(d, config.window, config.h[0] / config.rhs_refinement as f64)?;
    let reference = weighted_lp_norm(
        &GridSignal::from_signal(signal.clone(), coarse)?,
        &WeightedNormSpec::tolerant(config.p, config.alpha, config.window),
    )?
    .norm;
    let mut out = Vec::with_capacity(config.h.len());
    for &h in &config.h {
        let g = GridGeometry::new(d, config.window, h / m as f64)?;
        let f = GridSignal::from_signal(signal.clone(), g)?;
        let j = smooth(&f, h, order, &config.mollifier)?;
        let jg = *j.geometry();
        let origin = jg.origin() as i64;
        let kmax = origin / m as i64;
        let samples: Vec<(Vec<i64>, f64)> = multiindex::lattice_box(d, kmax)
            .into_iter()
            .map(|k| {
                let idx: Vec<usize> = k.iter().map(|&ki| (origin + ki * m as i64) as usize).collect();
                let v = j.value(&idx);
                (k, v)
            })
            .collect();
        let seq = weighted_sequence_norm(
            samples.iter().map(|(k, v)| (k.as_slice(), *v)),
            h,
            config.p,
            config.alpha,
            WeightSign::Minus,
        );
        let scale = if config.p.is_infinite() { 1.0 } else { h.powf(d as f64 / config.p) };
        out.push(scale * seq / reference);
    }
    Ok(out)
}

/// Runs every identity suite at the dimension and order of `config`.
pub fn identity_checks(config: &ExperimentConfig) -> Result<CheckReport> {
    config.validate()?;
    let pool = super::thread_pool(config.threads)?;
    pool.install(|| run_checks(config))
}

fn run_checks(config: &ExperimentConfig) -> Result<CheckReport> {
    let d = config.dim();
    let order = config.order();
    let sizes = config.checks;
    let kernel = config.kernel.build()?;
    let mut suites = Vec::new();

    // Peano kernel identity for every order up to L
    let f = make_exp_sin(d)?;
    let mut worst: f64 = 0.0;
    for l in 1..=order.min(MAX_DERIVATIVE_ORDER) {
        worst = worst.max(peano_residual(&f, l, sizes.peano_draws, sizes.seed.wrapping_add(l as u64))?);
    }
    suites.push(SuiteResult {
        name: "peano".into(),
        passed: worst <= PEANO_TOL,
        value: worst,
        threshold: PEANO_TOL,
        draws: sizes.peano_draws * order.min(MAX_DERIVATIVE_ORDER),
        detail: format!("exp(sin) in dimension {d}, orders 1..={order}"),
    });

    // directional-derivative bound
    let bound = sample_direction_bound(d, order.min(MAX_DERIVATIVE_ORDER), sizes.bound_draws, sizes.seed)?;
    suites.push(SuiteResult {
        name: "direction_bound".into(),
        passed: bound.violations == 0,
        value: bound.violations as f64,
        threshold: 0.0,
        draws: bound.draws,
        detail: match &bound.first_violation {
            Some(v) => format!("worst ratio {:.6}; first violation: {v}", bound.worst_ratio),
            None => format!("worst ratio {:.6}", bound.worst_ratio),
        },
    });
    suites.push(SuiteResult {
        name: "direction_bound_weighted".into(),
        passed: bound.weighted_violations == 0,
        value: bound.weighted_violations as f64,
        threshold: 0.0,
        draws: bound.draws,
        detail: "bound with multinomial weights L!/l! on each partial".into(),
    });

    // filters
    let a = dfilter::interpolation_prefilter(&kernel, DEFAULT_GRID)?;
    let q = dfilter::dual_filter(&kernel, DEFAULT_GRID)?;
    let width = kernel.axis(0).support();
    let autocorr = autocorrelation_sequence(&kernel, (width.1 - width.0).ceil() as usize);
    let samples = dfilter::sample_kernel(&kernel);

    // polynomial reproduction by the interpolant
    let grid: Vec<Vec<f64>> = {
        let per_axis: usize = if d == 1 { 201 } else { 41 };
        let side: Vec<f64> = (0..per_axis).map(|i| -5.0 + 10.0 * i as f64 / (per_axis - 1) as f64).collect();
        let count = per_axis.pow(d as u32);
        (0..count)
            .map(|mut flat| {
                let mut x = vec![0.0; d];
                for axis in (0..d).rev() {
                    x[axis] = side[flat % per_axis];
                    flat /= per_axis;
                }
                x
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    let mut worst_l = vec![0; d];
    for l in multiindex::up_to_order(d, order - 1) {
        let r = polynomial_reproduction_residual(&kernel, &a, &l, &grid, sizes.reproduction_truncation)?;
        if r.residual > worst {
            worst = r.residual;
            worst_l = l;
        }
    }
    suites.push(SuiteResult {
        name: "reproduction".into(),
        passed: worst <= REPRODUCTION_TOL,
        value: worst,
        threshold: REPRODUCTION_TOL,
        draws: grid.len(),
        detail: format!(
            "all |l| <= {}, truncation K = {}, worst at l = {worst_l:?}",
            order - 1,
            sizes.reproduction_truncation
        ),
    });

    let defect = interpolating_defect(&kernel, &a, 16);
    suites.push(SuiteResult {
        name: "interpolating".into(),
        passed: defect <= INTERPOLATING_TOL,
        value: defect,
        threshold: INTERPOLATING_TOL,
        draws: 33usize.pow(d as u32),
        detail: "interpolant at integers, ‖k‖∞ <= 16".into(),
    });

    let dual = composition_defect(&q, &autocorr)?;
    suites.push(SuiteResult {
        name: "dual_composition".into(),
        passed: dual <= COMPOSITION_TOL,
        value: dual,
        threshold: COMPOSITION_TOL,
        draws: q.len(),
        detail: "dual filter against the autocorrelation sequence".into(),
    });
    let pre = composition_defect(&a, &samples)?;
    suites.push(SuiteResult {
        name: "prefilter_composition".into(),
        passed: pre <= COMPOSITION_TOL,
        value: pre,
        threshold: COMPOSITION_TOL,
        draws: a.len(),
        detail: "prefilter against the integer samples".into(),
    });

    // scaling of sampled smoothed signals
    let ratios = smoothed_sample_scaling(config)?;
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let variation = max / min - 1.0;
    suites.push(SuiteResult {
        name: "sampling_scaling".into(),
        passed: variation < SCALING_VARIATION_LIMIT,
        value: variation,
        threshold: SCALING_VARIATION_LIMIT,
        draws: ratios.len(),
        detail: format!("ratios {ratios:?}"),
    });

    let passed = suites.iter().all(|s| s.passed);
    Ok(CheckReport {
        version: report::version_stamp(),
        generated_at: report::timestamp(),
        config: config.clone(),
        suites,
        passed,
    })
}

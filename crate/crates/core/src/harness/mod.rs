//! Experiment runner: convergence sweeps, slope fits and reports.

pub mod checks;
pub mod config;
pub mod report;

use std::sync::Arc;

use rayon::prelude::*;

pub use checks::identity_checks;
pub use config::{ExperimentConfig, KernelConfig, Mode};
pub use report::{Band, CheckReport, ConvergenceReport, Diagnostics, HRecord, SlopeFit, Stability, SuiteResult};

use crate::dfilter::{self, DEFAULT_GRID};
use crate::error::{invalid, Error, Result};
use crate::operators::{self, CoefficientField};
use crate::signals::{Growth, Signal};
use crate::spaces::{
    derivative_magnitude, derivative_magnitude_with, fractional_derivative_weighted, weighted_lp_norm,
    DerivativeMethod, GridField, GridGeometry, GridSignal, LazyGrid, NormResult, Quadrature, WeightedNormSpec,
};

/// Points needed for a slope fit.
pub const MIN_FIT_POINTS: usize = 4;
/// Largest accepted `max ratio / min ratio` over the clean sweep.
pub const RATIO_SPREAD_LIMIT: f64 = 3.0;
/// Largest accepted slope decrease when the coarsest scale is dropped.
pub const SLOPE_DROP_LIMIT: f64 = 0.3;
/// Bounds on the norm ratio across the sweep.
pub const STABILITY_VARIATION_LIMIT: f64 = 0.5;
pub const STABILITY_TREND_LIMIT: f64 = 0.1;

/// Ordinary least squares `y = a + b x`, returning `(b, a)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Least-squares slope of `log e` against `log h`. Points with `e = 0` are
/// dropped and reported in the returned notes.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<(SlopeFit, Vec<String>)> {
    let mut notes = Vec::new();
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(h, e) in points {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("scale {h} is not positive")));
        }
        if e == 0.0 {
            notes.push(format!("h = {h}: zero error, dropped from the fit"));
            continue;
        }
        if !(e > 0.0 && e.is_finite()) {
            return Err(invalid("error", format!("error {e} at h = {h} is not a positive number")));
        }
        xs.push(h.ln());
        ys.push(e.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            required: MIN_FIT_POINTS,
            actual: xs.len(),
        });
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok((
        SlopeFit {
            slope,
            intercept,
            residual,
            points: xs.len(),
        },
        notes,
    ))
}

pub(crate) fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| invalid("threads", e.to_string()))
}

enum Approximant {
    Coefficients(CoefficientField),
    Smoothed(GridSignal),
}

impl Approximant {
    fn covers(&self, half_width: f64) -> bool {
        match self {
            Approximant::Coefficients(c) => c.covers(half_width),
            Approximant::Smoothed(j) => j.geometry().half_width >= half_width - 1e-12,
        }
    }
}

fn growth_order(signal: &dyn Signal) -> f64 {
    match signal.growth() {
        Growth::Polynomial { order, .. } => order,
        Growth::Compact => 0.0,
    }
}

/// Right-hand-side magnitude field, stability reference field, and notes.
fn rhs_fields(
    config: &ExperimentConfig,
    signal: &Arc<dyn Signal>,
    geom: GridGeometry,
) -> Result<(GridSignal, GridSignal, Vec<String>, String)> {
    let order = config.order();
    let mut notes = Vec::new();
    match config.mode {
        Mode::Interpolation => {
            let r = config.r.expect("validated");
            if let Some(g) = signal.fractional(r) {
                let field = GridSignal::from_signal(g, geom)?;
                let mag = derivative_magnitude(&field, order)?;
                Ok((mag, field, notes, format!("(D^{r} f)^({order})")))
            } else {
                // spectral multiplier on the full window, then restricted
                let wide = GridGeometry::new(geom.dim, config.window, geom.step)?;
                let f = GridSignal::from_signal(signal.clone(), wide)?;
                let dr = fractional_derivative_weighted(&f, r, config.alpha)?;
                notes.extend(dr.flags().iter().cloned());
                notes.push("D^r from the discrete Fourier multiplier".into());
                let dr = dr.restrict(geom.half_width)?.with_growth(Growth::polynomial(growth_order(signal.as_ref())));
                let mag = derivative_magnitude_with(
                    &dr,
                    order,
                    DerivativeMethod::FiniteDifference {
                        accuracy: crate::spaces::DEFAULT_FD_ACCURACY,
                    },
                )?;
                notes.extend(mag.flags().iter().cloned());
                Ok((mag, dr, notes, format!("(D^{r} f)^({order})")))
            }
        }
        _ => {
            let field = GridSignal::from_signal(signal.clone(), geom)?;
            let mag = derivative_magnitude(&field, order)?;
            Ok((mag, field, notes, format!("f^({order})")))
        }
    }
}

/// Quadrature step `q` if it is a whole number of grid steps.
fn coarse_quadrature(q: f64, step: f64) -> Quadrature {
    let r = q / step;
    Quadrature {
        step: ((r - r.round()).abs() < 1e-9 && r >= 1.0).then_some(q),
        ..Quadrature::default()
    }
}

/// Convergence sweep for projection, interpolation or smoothing.
pub fn run(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    if config.mode == Mode::IdentityChecks {
        return Err(invalid("mode", "identity checks produce a check report; use identity_checks"));
    }
    let pool = thread_pool(config.threads)?;
    pool.install(|| run_sweep(config))
}

fn run_sweep(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let kernel = config.kernel.build()?;
    let signal = config.signal.build()?;
    let d = config.dim();
    let order = config.order();
    let m = config.refinement;
    let h_max = config.h[0];
    let beta = growth_order(signal.as_ref());

    let filter = match config.mode {
        Mode::Projection => Some(dfilter::dual_filter(&kernel, DEFAULT_GRID)?),
        Mode::Interpolation => Some(dfilter::interpolation_prefilter(&kernel, DEFAULT_GRID)?),
        _ => None,
    };

    let approximants: Vec<Approximant> = config
        .h
        .par_iter()
        .map(|&h| -> Result<Approximant> {
            let geom = GridGeometry::new(d, config.window, h / m as f64)?;
            match config.mode {
                Mode::Projection => {
                    let f = LazyGrid::from_signal(signal.as_ref(), geom);
                    let q = filter.as_ref().expect("projection filter");
                    Ok(Approximant::Coefficients(operators::project_with_filter(&f, &kernel, h, q)?))
                }
                Mode::Interpolation => {
                    let a = filter.as_ref().expect("prefilter");
                    Ok(Approximant::Coefficients(operators::interpolate_signal(
                        signal.as_ref(),
                        &kernel,
                        h,
                        config.window,
                        a,
                    )?))
                }
                Mode::Smoothing => {
                    let f = GridSignal::from_signal(signal.clone(), geom)?;
                    Ok(Approximant::Smoothed(operators::smooth(&f, h, order, &config.mollifier)?))
                }
                Mode::IdentityChecks => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;

    // error window: a multiple of the largest scale, covered at every scale
    let (lo, hi) = kernel.axis(0).support();
    let mut policy = (hi - lo + order as f64) * h_max;
    if config.mode == Mode::Smoothing {
        policy += (config.mollifier.center.abs() + config.mollifier.radius) * order as f64 * h_max;
    }
    let cells = (config.window / h_max).round() as i64;
    let interior = match config.interior {
        Some(w) => {
            if !approximants.iter().all(|a| a.covers(w)) {
                return Err(invalid("interior", format!("error window {w} is not covered at every scale")));
            }
            w
        }
        None => {
            let mut j = cells - (policy / h_max).ceil() as i64;
            while j > 0 && !approximants.iter().all(|a| a.covers(j as f64 * h_max)) {
                j -= 1;
            }
            if j <= 0 {
                return Err(invalid("window", "no interior window survives the boundary exclusion"));
            }
            j as f64 * h_max
        }
    };
    let spec = WeightedNormSpec::tolerant(config.p, config.alpha, interior);

    let rhs_geom = GridGeometry::new(d, interior, h_max / config.rhs_refinement as f64)?;
    let (rhs_field, reference_field, mut notes, rhs_label) = rhs_fields(config, &signal, rhs_geom)?;
    let rhs = weighted_lp_norm(&rhs_field, &spec)?;
    let reference = weighted_lp_norm(&reference_field, &spec)?;
    if rhs.flagged {
        notes.push(format!("right-hand side tail bound {:?} exceeds 1% of its norm", rhs.tail_bound));
    }

    let measured: Vec<(NormResult, f64)> = config
        .h
        .par_iter()
        .zip(&approximants)
        .map(|(&h, approx)| -> Result<(NormResult, f64)> {
            let geom = GridGeometry::new(d, interior, h / m as f64)?;
            let coarse = WeightedNormSpec {
                quadrature: coarse_quadrature(rhs_geom.step, geom.step),
                ..spec
            };
            match approx {
                Approximant::Coefficients(c) => {
                    let synth = operators::synthesize_grid(c, geom)?;
                    let sig = signal.as_ref();
                    let synth_ref = &synth;
                    let error = LazyGrid::new(geom, move |row, out| {
                        synth_ref.fill_row(row, out);
                        let mut x = geom.row_coords(row);
                        x.push(0.0);
                        for (j, o) in out.iter_mut().enumerate() {
                            x[d - 1] = geom.node(j);
                            *o = sig.value(&x) - *o;
                        }
                    })
                    .with_growth(Growth::polynomial(beta));
                    let e = weighted_lp_norm(&error, &spec)?;
                    let a = weighted_lp_norm(&synth, &coarse)?;
                    Ok((e, a.norm))
                }
                Approximant::Smoothed(j) => {
                    let jw = j.restrict(interior)?;
                    let fw = GridSignal::from_signal(signal.clone(), geom)?;
                    let error = fw.zip_with(&jw, |a, b| a - b)?.with_growth(Growth::polynomial(beta));
                    let e = weighted_lp_norm(&error, &spec)?;
                    let a = weighted_lp_norm(&jw, &coarse)?;
                    Ok((e, a.norm))
                }
            }
        })
        .collect::<Result<_>>()?;

    let records: Vec<HRecord> = config
        .h
        .iter()
        .zip(&measured)
        .map(|(&h, (e, approx_norm))| {
            let mut flags = Vec::new();
            if e.flagged {
                flags.push("tail".to_string());
            }
            if rhs.flagged {
                flags.push("rhs-tail".to_string());
            }
            let ratio = e.norm / (h.powi(order as i32) * rhs.norm);
            HRecord {
                h,
                error: e.norm,
                rhs: rhs.norm,
                ratio: ratio.is_finite().then_some(ratio),
                flags,
                approx_norm: *approx_norm,
                error_tail: e.tail_bound.filter(|t| t.is_finite()),
            }
        })
        .collect();

    let clean: Vec<&HRecord> = records.iter().filter(|r| r.is_clean()).collect();
    let points: Vec<(f64, f64)> = clean.iter().map(|r| (r.h, r.error)).collect();
    let fit = match fit_slope(&points) {
        Ok((fit, dropped)) => {
            notes.extend(dropped);
            Some(fit)
        }
        Err(Error::TooFewPoints { actual, .. }) => {
            notes.push(format!("only {actual} clean points; slope not fitted"));
            None
        }
        Err(e) => return Err(e),
    };
    let slope_without_largest_h = if points.len() > MIN_FIT_POINTS {
        fit_slope(&points[1..]).ok().map(|(f, _)| f.slope)
    } else {
        None
    };
    let ratios: Vec<f64> = clean.iter().filter(|r| r.error > 0.0).filter_map(|r| r.ratio).collect();
    let ratio_spread = (!ratios.is_empty()).then(|| {
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    });

    let stability = match config.mode {
        Mode::Projection | Mode::Interpolation => {
            let ratios: Vec<f64> = records.iter().map(|r| r.approx_norm / reference.norm).collect();
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            let xs: Vec<f64> = records.iter().map(|r| r.h.ln()).collect();
            let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
            let trend = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { 0.0 };
            Some(Stability {
                reference: if config.mode == Mode::Interpolation {
                    format!("D^{} f", config.r.unwrap_or(0.0))
                } else {
                    "f".into()
                },
                reference_norm: reference.norm,
                ratios,
                variation: max / min - 1.0,
                trend,
            })
        }
        _ => None,
    };

    let l = order as f64;
    let mut bands = vec![
        Band::new(
            "slope",
            fit.map(|f| f.slope),
            Some(l - config.slope_band),
            Some(l + config.slope_band),
        ),
        Band::new("ratio_spread", ratio_spread, None, Some(RATIO_SPREAD_LIMIT)),
    ];
    if let (Some(f), Some(s)) = (fit, slope_without_largest_h) {
        bands.push(Band::new("slope_drop_without_largest_h", Some(f.slope - s), None, Some(SLOPE_DROP_LIMIT)));
    }
    if let Some(s) = &stability {
        bands.push(Band::new("stability_variation", Some(s.variation), None, Some(STABILITY_VARIATION_LIMIT)));
        bands.push(Band::new(
            "stability_trend",
            Some(s.trend),
            Some(-STABILITY_TREND_LIMIT),
            Some(STABILITY_TREND_LIMIT),
        ));
    }
    let inconclusive = fit.is_none();
    let passed = !inconclusive && bands.iter().all(|b| b.passed);

    Ok(ConvergenceReport {
        version: report::version_stamp(),
        generated_at: report::timestamp(),
        config: config.clone(),
        order,
        interior,
        shrink: config.window - interior,
        rhs_label,
        records,
        fit,
        inconclusive,
        stability,
        diagnostics: Diagnostics {
            ratio_spread,
            slope_without_largest_h,
            notes,
        },
        bands,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (3..=8).map(|j| 2f64.powi(-j)).map(|h| (h, 5.0 * h.powi(4))).collect();
        let (fit, notes) = fit_slope(&pts).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(notes.is_empty());
        let sq: Vec<(f64, f64)> = (1..=5).map(|j| 2f64.powi(-j)).map(|h| (h, h * h)).collect();
        let (fit, _) = fit_slope(&sq).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && fit.residual < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<(f64, f64)> = (3..=8)
            .map(|j| 2f64.powi(-j))
            .map(|h| (h, 3.0 * h.powi(4) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))))
            .collect();
        let (fit, _) = fit_slope(&pts).unwrap();
        assert!((3.9..=4.1).contains(&fit.slope));
    }

    #[test]
    fn too_few_points_and_zero_errors() {
        assert!(matches!(
            fit_slope(&[(0.5, 0.25), (0.25, 0.0625)]),
            Err(Error::TooFewPoints { .. })
        ));
        let pts = [(0.5, 0.25), (0.25, 0.0), (0.125, 0.015625), (0.0625, 0.00390625), (0.03125, 0.0009765625)];
        let (fit, notes) = fit_slope(&pts).unwrap();
        assert_eq!(fit.points, 4);
        assert_eq!(notes.len(), 1);
    }
}

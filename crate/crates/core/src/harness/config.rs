//! Experiment configuration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{bspline, tensor_product, PiecewisePolyKernel};
use crate::operators::{MollifierSpec, MIN_REFINEMENT};
use crate::signals::SignalSpec;
use crate::spaces::{exponent, GridGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Projection,
    Interpolation,
    Smoothing,
    IdentityChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Bspline,
}

/// B-spline of order `order` on every axis, used in centered form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default = "default_family")]
    pub family: KernelFamily,
    pub order: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_family() -> KernelFamily {
    KernelFamily::Bspline
}

fn default_dim() -> usize {
    1
}

impl KernelConfig {
    pub fn build(&self) -> Result<PiecewisePolyKernel> {
        let b = bspline(self.order)?;
        let k = if self.dim == 1 {
            b
        } else {
            tensor_product(&vec![b; self.dim])?
        };
        Ok(k.centered())
    }
}

/// Sizes of the identity suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSizes {
    #[serde(default = "default_peano_draws")]
    pub peano_draws: usize,
    #[serde(default = "default_bound_draws")]
    pub bound_draws: usize,
    /// Prefilter truncation used by the reproduction suite.
    #[serde(default = "default_reproduction_truncation")]
    pub reproduction_truncation: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_peano_draws() -> usize {
    50
}
fn default_bound_draws() -> usize {
    10_000
}
fn default_reproduction_truncation() -> usize {
    40
}
fn default_seed() -> u64 {
    1
}

impl Default for CheckSizes {
    fn default() -> Self {
        CheckSizes {
            peano_draws: default_peano_draws(),
            bound_draws: default_bound_draws(),
            reproduction_truncation: default_reproduction_truncation(),
            seed: default_seed(),
        }
    }
}

pub fn default_h_list() -> Vec<f64> {
    (3..=8).map(|j| 2f64.powi(-j)).collect()
}

fn default_refinement() -> usize {
    16
}

fn default_slope_band() -> f64 {
    0.2
}

fn default_rhs_refinement() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub kernel: KernelConfig,
    pub signal: SignalSpec,
    #[serde(with = "exponent")]
    pub p: f64,
    pub alpha: f64,
    /// Fractional order for interpolation runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default = "default_h_list")]
    pub h: Vec<f64>,
    /// Half-width `T` of the window `[-T, T]^d`.
    pub window: f64,
    /// Grid points per `h`, `m = h / δ`.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// Grid points per largest `h` for the right-hand-side norm.
    #[serde(default = "default_rhs_refinement")]
    pub rhs_refinement: usize,
    /// Explicit half-width of the error window; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<f64>,
    #[serde(default)]
    pub mollifier: MollifierSpec,
    #[serde(default = "default_slope_band")]
    pub slope_band: f64,
    #[serde(default)]
    pub checks: CheckSizes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim
    }

    /// Approximation order `L`.
    pub fn order(&self) -> usize {
        self.kernel.order
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.signal = out.signal.with_seed(seed);
        out.checks.seed = seed;
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(invalid("kernel.dim", "dimension must be positive"));
        }
        if self.kernel.order == 0 {
            return Err(invalid("kernel.order", "order must be positive"));
        }
        if self.signal.dim() != d {
            return Err(invalid(
                "signal",
                format!("signal dimension {} differs from kernel dimension {d}", self.signal.dim()),
            ));
        }
        if !(self.p >= 1.0) {
            return Err(invalid("p", "exponent must be at least 1"));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("alpha", "weight exponent must be non-negative"));
        }
        if !(self.window > 0.0) {
            return Err(invalid("window", "half-width must be positive"));
        }
        if !(self.slope_band > 0.0) {
            return Err(invalid("slope_band", "band must be positive"));
        }
        if self.h.is_empty() || self.h.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(invalid("h", "scales must be positive"));
        }
        if self.h.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("h", "scales must be strictly decreasing"));
        }
        if self.refinement < MIN_REFINEMENT {
            return Err(invalid("refinement", format!("h/δ must be at least {MIN_REFINEMENT}")));
        }
        if self.refinement % 2 == 1 {
            return Err(invalid("refinement", "h/δ must be even so quadrature panels pair up inside kernel pieces"));
        }
        if self.rhs_refinement < 2 {
            return Err(invalid("rhs_refinement", "need at least two points per h"));
        }
        let h_max = self.h[0];
        for &h in &self.h {
            let ratio = h_max / h;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(invalid("h", format!("scale {h} does not divide the largest scale {h_max}")));
            }
            let g = GridGeometry::new(d, self.window, h / self.refinement as f64)?;
            if (g.n - 1) % 2 == 1 {
                return Err(invalid("window", "the origin must be a grid node"));
            }
        }
        let cells = self.window / h_max;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(invalid("window", "half-width must be a multiple of the largest scale"));
        }
        if let Some(w) = self.interior {
            if !(w > 0.0 && w < self.window) {
                return Err(invalid("interior", "error window must lie strictly inside the window"));
            }
        }
        if self.mode == Mode::Interpolation {
            let r = self.r.ok_or_else(|| invalid("r", "interpolation runs need a fractional order"))?;
            let threshold = if self.p.is_infinite() { 0.0 } else { d as f64 / self.p };
            if !(r > threshold) {
                return Err(invalid("r", format!("fractional order {r} must exceed d/p = {threshold}")));
            }
        }
        if let Some(0) = self.threads {
            return Err(invalid("threads", "thread count must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "mode": "projection",
            "kernel": {"order": 4},
            "signal": {"family": "growing_oscillation", "beta": 1.0, "omega0": 1.0},
            "p": 2,
            "alpha": 2.5,
            "window": 64
        })
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json_str(&base().to_string()).unwrap();
        assert_eq!(cfg.h, default_h_list());
        assert_eq!(cfg.refinement, 16);
        assert_eq!(cfg.slope_band, 0.2);
        assert_eq!(cfg.kernel.dim, 1);
    }

    #[test]
    fn infinite_exponent_parses() {
        let mut v = base();
        v["p"] = "inf".into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).unwrap().p.is_infinite());
    }

    #[test]
    fn rejects_bad_sweeps() {
        let mut v = base();
        v["h"] = serde_json::json!([0.125, 0.25]);
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        let mut v = base();
        v["refinement"] = 4.into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        let mut v = base();
        v["h"] = serde_json::json!([0.125, 0.1]);
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn interpolation_needs_enough_regularity() {
        let mut v = base();
        v["mode"] = "interpolation".into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        v["r"] = 0.4.into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        v["r"] = 1.1.into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_ok());
    }
}

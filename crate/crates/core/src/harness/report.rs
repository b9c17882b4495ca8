//! Convergence and identity-check reports.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;

pub const CSV_HEADER: &str = "h,error,rhs,ratio,flags";

pub fn version_stamp() -> String {
    format!("siapprox {}", env!("CARGO_PKG_VERSION"))
}

pub fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HRecord {
    pub h: f64,
    pub error: f64,
    pub rhs: f64,
    /// `error / (h^L rhs)`; `None` when the right-hand side vanishes.
    pub ratio: Option<f64>,
    pub flags: Vec<String>,
    /// Norm of the approximant over the error window.
    pub approx_norm: f64,
    pub error_tail: Option<f64>,
}

impl HRecord {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of `log e` from the fitted line.
    pub residual: f64,
    pub points: usize,
}

/// Boundedness of `approx_norm / reference` across the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub reference: String,
    pub reference_norm: f64,
    pub ratios: Vec<f64>,
    /// `max / min - 1`.
    pub variation: f64,
    /// Slope of `log ratio` against `log h`.
    pub trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    /// `None` when the statistic could not be computed.
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Band {
    pub fn new(name: &str, value: Option<f64>, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = value.is_some_and(|v| {
            v.is_finite() && lower.is_none_or(|lo| v >= lo) && upper.is_none_or(|hi| v <= hi)
        });
        Band {
            name: name.into(),
            value: value.filter(|v| v.is_finite()),
            lower,
            upper,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max ratio / min ratio` over clean points.
    pub ratio_spread: Option<f64>,
    pub slope_without_largest_h: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub version: String,
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub order: usize,
    /// Half-width of the window errors are measured on.
    pub interior: f64,
    /// Band removed from each side of the signal window.
    pub shrink: f64,
    pub rhs_label: String,
    pub records: Vec<HRecord>,
    pub fit: Option<SlopeFit>,
    pub inconclusive: bool,
    pub stability: Option<Stability>,
    pub diagnostics: Diagnostics,
    pub bands: Vec<Band>,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{}",
                r.h,
                r.error,
                r.rhs,
                r.ratio.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.flags.join(";")
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the suite statistic.
    pub value: f64,
    pub threshold: f64,
    pub draws: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub version: String,
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

impl CheckReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

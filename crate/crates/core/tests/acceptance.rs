//! Acceptance criteria AC1–AC8. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use siapprox::dfilter::{interpolation_prefilter, sample_kernel, DEFAULT_GRID};
use siapprox::harness::{self, ConvergenceReport, ExperimentConfig, RATIO_SPREAD_LIMIT};
use siapprox::kernel::bspline;

const SLOPE_BAND: f64 = 0.2;
const STABILITY_VARIATION: f64 = 0.5;
const STABILITY_TREND: f64 = 0.1;
const CASE_BUDGET: Duration = Duration::from_secs(120);
const SMOKE_BUDGET: Duration = Duration::from_secs(600);
const ORACLE_TOL: f64 = 1e-10;

struct Outcome {
    passed: bool,
    summary: String,
}

fn config(v: Value) -> ExperimentConfig {
    let cfg = ExperimentConfig::from_json_str(&v.to_string()).expect("config parses");
    cfg.validate().expect("config is valid");
    cfg
}

fn timed_run(cfg: &ExperimentConfig) -> (ConvergenceReport, Duration) {
    let start = Instant::now();
    let report = harness::run(cfg).expect("sweep runs");
    (report, start.elapsed())
}

fn slope_of(r: &ConvergenceReport) -> Option<f64> {
    r.fit.map(|f| f.slope)
}

fn in_band(slope: Option<f64>, target: f64, band: f64) -> bool {
    slope.is_some_and(|s| (s - target).abs() <= band)
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn stability_ok(r: &ConvergenceReport) -> (bool, String) {
    match &r.stability {
        Some(s) => (
            s.variation < STABILITY_VARIATION && s.trend.abs() <= STABILITY_TREND,
            format!("variation {:.3} trend {:+.3}", s.variation, s.trend),
        ),
        None => (false, "no stability record".into()),
    }
}

fn signal_label(v: &Value) -> String {
    let family = v["family"].as_str().unwrap_or("?");
    match v.get("seed") {
        Some(s) => format!("{family}#{s}"),
        None => family.to_string(),
    }
}

fn projection_rate() -> (Outcome, Vec<ConvergenceReport>) {
    let mut passed = true;
    let mut reports = Vec::new();
    for order in [2usize, 3, 4] {
        for (p, label) in [(json!(2), "2"), (json!("inf"), "inf")] {
            let cfg = config(json!({
                "mode": "projection",
                "kernel": {"order": order},
                "signal": {"family": "growing_oscillation", "beta": 1.0, "omega0": 1.0},
                "p": p, "alpha": 2.5, "window": 64
            }));
            let (report, elapsed) = timed_run(&cfg);
            let slope = slope_of(&report);
            let ok = in_band(slope, order as f64, SLOPE_BAND) && elapsed < CASE_BUDGET;
            println!(
                "    L={order} p={label} slope {} ({:.1}s) {}",
                fmt(slope),
                elapsed.as_secs_f64(),
                if ok { "ok" } else { "out of band" }
            );
            passed &= ok;
            reports.push(report);
        }
    }
    let summary = "projection slopes within ±0.2 of L for L=2,3,4 and p=2,inf".into();
    (Outcome { passed, summary }, reports)
}

fn interpolation_rate() -> (Outcome, Vec<ConvergenceReport>) {
    let mut passed = true;
    let mut reports = Vec::new();
    for order in [2usize, 3, 4] {
        for seed in [1u64, 2, 3] {
            let signal = json!({"family": "spectral", "seed": seed, "terms": 4, "degree": 1});
            let cfg = config(json!({
                "mode": "interpolation",
                "kernel": {"order": order},
                "signal": signal,
                "p": 2, "alpha": 2.5, "r": 1.1, "window": 64
            }));
            let (report, elapsed) = timed_run(&cfg);
            let slope = slope_of(&report);
            let spread = report.diagnostics.ratio_spread;
            let ok = in_band(slope, order as f64, SLOPE_BAND) && spread.is_some_and(|s| s <= RATIO_SPREAD_LIMIT);
            println!(
                "    L={order} {} slope {} ratio spread {} ({:.1}s) {}",
                signal_label(&signal),
                fmt(slope),
                fmt(spread),
                elapsed.as_secs_f64(),
                if ok { "ok" } else { "out of band" }
            );
            passed &= ok;
            reports.push(report);
        }
    }
    let summary = "interpolation slopes within ±0.2 of L, per-h ratios within a factor 3".into();
    (Outcome { passed, summary }, reports)
}

fn stability_lines(reports: &[ConvergenceReport]) -> bool {
    let mut passed = true;
    for r in reports {
        let (ok, detail) = stability_ok(r);
        println!(
            "    L={} {} p={} {detail} {}",
            r.order,
            signal_label(&serde_json::to_value(&r.config.signal).unwrap_or_default()),
            r.config.p,
            if ok { "ok" } else { "unstable" }
        );
        passed &= ok;
    }
    passed
}

fn projector_stability(sweeps: &[ConvergenceReport]) -> Outcome {
    let mut reports: Vec<ConvergenceReport> = sweeps.to_vec();
    let extra = [
        (json!({"family": "random_trig_poly", "seed": 7, "terms": 8, "beta": 1.0}), 2.5),
        (json!({"family": "exp_sin"}), 1.5),
        (json!({"family": "spectral", "seed": 1, "terms": 4, "degree": 1}), 2.5),
    ];
    for (signal, alpha) in extra {
        for order in [2usize, 4] {
            let cfg = config(json!({
                "mode": "projection",
                "kernel": {"order": order},
                "signal": signal,
                "p": 2, "alpha": alpha, "window": 64
            }));
            reports.push(timed_run(&cfg).0);
        }
    }
    Outcome {
        passed: stability_lines(&reports),
        summary: "‖Pf‖/‖f‖ variation < 50% and |trend| ≤ 0.1 across all signals".into(),
    }
}

fn interpolation_stability(sweeps: &[ConvergenceReport]) -> Outcome {
    Outcome {
        passed: stability_lines(sweeps),
        summary: "‖If‖/‖D^r f‖ variation < 50% and |trend| ≤ 0.1".into(),
    }
}

fn smoothing_rate() -> Outcome {
    let mut passed = true;
    for order in [2usize, 3] {
        let cfg = config(json!({
            "mode": "smoothing",
            "kernel": {"order": order},
            "signal": {"family": "growing_oscillation", "beta": 1.0, "omega0": 1.0},
            "p": 2, "alpha": 2.5, "window": 64, "refinement": 32,
            "mollifier": {"center": 0.5, "radius": 0.5}
        }));
        let (report, elapsed) = timed_run(&cfg);
        let slope = slope_of(&report);
        let ok = in_band(slope, order as f64, SLOPE_BAND);
        println!(
            "    L={order} slope {} ({:.1}s) {}",
            fmt(slope),
            elapsed.as_secs_f64(),
            if ok { "ok" } else { "out of band" }
        );
        passed &= ok;
    }
    Outcome {
        passed,
        summary: "smoothing slopes within ±0.2 of L for L=2,3".into(),
    }
}

fn identity_suites() -> Outcome {
    let cases = [
        json!({
            "mode": "identity-checks",
            "kernel": {"order": 4},
            "signal": {"family": "growing_oscillation", "beta": 1.0, "omega0": 1.0},
            "p": 2, "alpha": 2.5, "window": 64
        }),
        json!({
            "mode": "identity-checks",
            "kernel": {"order": 4, "dim": 2},
            "signal": {"family": "growing_oscillation", "dim": 2, "beta": 1.0, "omega0": 1.0},
            "p": 2, "alpha": 4, "window": 4, "refinement": 8,
            "h": [0.25, 0.125, 0.0625, 0.03125]
        }),
    ];
    let mut passed = true;
    let mut failing = Vec::new();
    for v in cases {
        let cfg = config(v);
        let report = harness::identity_checks(&cfg).expect("identity suites run");
        for s in &report.suites {
            println!(
                "    d={} {:<26} {:.3e} (limit {:.1e}) {}",
                cfg.dim(),
                s.name,
                s.value,
                s.threshold,
                if s.passed { "ok" } else { "FAILED" }
            );
            if !s.passed {
                println!("        {}", s.detail);
                failing.push(format!("{} at d={}", s.name, cfg.dim()));
            }
        }
        passed &= report.passed;
    }
    let summary = if failing.is_empty() {
        "all identity suites within tolerance at d=1,2".into()
    } else {
        format!("failing suites: {}", failing.join(", "))
    };
    Outcome { passed, summary }
}

fn oracle_equivalences() -> Outcome {
    let cubic = bspline(4).expect("cubic").centered();
    let a = interpolation_prefilter(&cubic, DEFAULT_GRID).expect("prefilter");
    let pole_gap = (-20i64..=20)
        .map(|k| (a.get(&[k]) - common::cubic_prefilter_by_pole(k)).abs())
        .fold(0.0, f64::max);

    let mut sample_gap: f64 = 0.0;
    for order in 1..=6usize {
        let causal = bspline(order).expect("bspline");
        let samples = sample_kernel(&causal);
        for k in -1..=(order as i64 + 1) {
            let oracle = common::bspline_by_convolution(order, k as f64);
            sample_gap = sample_gap.max((samples.get(&[k]) - oracle).abs());
        }
    }
    println!("    prefilter vs pole oracle, |k|≤20: {pole_gap:.2e}");
    println!("    integer samples vs convolution oracle, orders 1..6: {sample_gap:.2e}");
    Outcome {
        passed: pole_gap <= ORACLE_TOL && sample_gap <= ORACLE_TOL,
        summary: format!("prefilter gap {pole_gap:.1e}, sample gap {sample_gap:.1e}"),
    }
}

fn smoke_2d() -> Outcome {
    let cfg = config(json!({
        "mode": "projection",
        "kernel": {"order": 4, "dim": 2},
        "signal": {"family": "growing_oscillation", "dim": 2, "beta": 1.0, "omega0": 1.0},
        "p": 2, "alpha": 4, "window": 16, "refinement": 8,
        "h": [0.125, 0.0625, 0.03125, 0.015625],
        "slope_band": 0.4
    }));
    let (report, elapsed) = timed_run(&cfg);
    let slope = slope_of(&report);
    let passed = in_band(slope, 4.0, 0.4) && elapsed < SMOKE_BUDGET;
    Outcome {
        passed,
        summary: format!("tensor cubic slope {} in {:.1}s", fmt(slope), elapsed.as_secs_f64()),
    }
}

fn report(id: &str, o: &Outcome, all: &mut bool) {
    println!("{id} {} {}", if o.passed { "PASS" } else { "FAIL" }, o.summary);
    *all &= o.passed;
}

fn main() -> ExitCode {
    let mut all = true;

    let (ac1, projection_sweeps) = projection_rate();
    report("AC1", &ac1, &mut all);

    let (ac2, interpolation_sweeps) = interpolation_rate();
    report("AC2", &ac2, &mut all);

    report("AC3", &projector_stability(&projection_sweeps), &mut all);
    report("AC4", &interpolation_stability(&interpolation_sweeps), &mut all);
    report("AC5", &smoothing_rate(), &mut all);
    report("AC6", &identity_suites(), &mut all);
    report("AC7", &oracle_equivalences(), &mut all);
    report("AC8", &smoke_2d(), &mut all);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

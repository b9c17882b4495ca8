use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn siapprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siapprox")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const PROJECTION: &str = r#"{
    "mode": "projection",
    "kernel": {"order": 2},
    "signal": {"family": "random_trig_poly", "seed": 5, "terms": 4, "beta": 1.0},
    "p": 2, "alpha": 2.5, "window": 32,
    "h": [0.25, 0.125, 0.0625, 0.03125, 0.015625]
}"#;

#[test]
fn run_writes_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", PROJECTION);
    let out_dir = dir.path().join("out");
    let out = siapprox(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h,error,rhs,ratio,flags"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 5, "{row}");
        for c in &cols[..4] {
            c.parse::<f64>().unwrap();
        }
    }

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["config"]["threads"], 2);
    let slope = report["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "{slope}");
    assert!(report["version"].as_str().unwrap().starts_with("siapprox "));
}

#[test]
fn seed_flag_reaches_the_signal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", PROJECTION);
    let out_dir = dir.path().join("seeded");
    let out = siapprox(&["run", &cfg, "--seed", "77", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["signal"]["seed"], 77);
    assert_eq!(report["config"]["checks"]["seed"], 77);
}

#[test]
fn failing_band_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // the fitted slope is never exactly 2
    let body = PROJECTION.replace(r#""p": 2,"#, r#""p": 2, "slope_band": 1e-9,"#);
    let cfg = write_config(dir.path(), "tight.json", &body);
    let out = siapprox(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &PROJECTION.replace("0.0625, 0.03125", "0.03125, 0.0625"));
    let out = siapprox(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let missing = siapprox(&["run", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn check_runs_identity_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "checks.json",
        r#"{"mode": "identity-checks", "kernel": {"order": 4},
            "signal": {"family": "growing_oscillation", "beta": 1.0, "omega0": 1.0},
            "p": 2, "alpha": 2.5, "window": 64}"#,
    );
    let out_dir = dir.path().join("out");
    let out = siapprox(&["check", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("checks.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["suites"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    for expected in ["peano", "direction_bound", "reproduction", "interpolating", "dual_composition", "prefilter_composition"] {
        assert!(names.contains(&expected), "{names:?}");
    }
}

#[test]
fn certify_kernel_reports_cubic_properties() {
    let dir = tempfile::tempdir().unwrap();
    let out = siapprox(&["certify-kernel", "--order", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("kernel.json")).unwrap()).unwrap();
    assert_eq!(doc["strang_fix_order"], 4);
    assert_eq!(doc["passed"], Value::Bool(true));
    // Σ a[k] (-1)^k with a = (1/5040, 1/42, 397/1680, 151/315, ...) gives 17/315
    let lower = doc["riesz_bounds"]["lower"].as_f64().unwrap();
    assert!((lower - 17.0 / 315.0).abs() < 1e-12, "{lower}");
    assert!((doc["riesz_bounds"]["upper"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let zero = siapprox(&["certify-kernel", "--order", "0"]);
    assert_eq!(zero.status.code(), Some(2));
}

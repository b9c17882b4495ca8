use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use siapprox::dfilter::{self, DEFAULT_GRID};
use siapprox::harness::{self, ExperimentConfig, Mode};
use siapprox::kernel::{self, bspline, autocorrelation_sequence};

#[derive(Parser)]
#[command(name = "siapprox", version, about = "Approximation-rate experiments in spline spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for reports
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of seeded signals and identity suites
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads across scales
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence sweep described by a config file
    Run { config: PathBuf },
    /// Identity suites for the kernel and signal of a config file
    Check { config: PathBuf },
    /// Strang-Fix order, Riesz bounds and filters of a B-spline
    CertifyKernel {
        #[arg(long)]
        order: usize,
    },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(out: &Option<PathBuf>, name: &str, body: &str) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli, path: &Path) -> Result<bool> {
    let cfg = load(path, cli)?;
    if cfg.mode == Mode::IdentityChecks {
        return check(cli, path);
    }
    let report = harness::run(&cfg)?;
    write(&cli.out, "report.json", &report.to_json())?;
    write(&cli.out, "report.csv", &report.to_csv())?;
    print!("{}", report.to_csv());
    match report.fit {
        Some(f) => println!("slope {:.4} (residual {:.2e}, {} points)", f.slope, f.residual, f.points),
        None => println!("slope not fitted: inconclusive"),
    }
    for b in &report.bands {
        println!("{:<32} {:>12} {}", b.name, fmt_opt(b.value), if b.passed { "ok" } else { "FAILED" });
    }
    for n in &report.diagnostics.notes {
        println!("note: {n}");
    }
    Ok(report.passed)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn check(cli: &Cli, path: &Path) -> Result<bool> {
    let cfg = load(path, cli)?;
    let report = harness::identity_checks(&cfg)?;
    write(&cli.out, "checks.json", &report.to_json())?;
    for s in &report.suites {
        println!(
            "{:<26} {:>12.3e} (limit {:.1e}) {}",
            s.name,
            s.value,
            s.threshold,
            if s.passed { "ok" } else { "FAILED" }
        );
        if !s.passed {
            println!("    {}", s.detail);
        }
    }
    Ok(report.passed)
}

fn certify(cli: &Cli, order: usize) -> Result<bool> {
    let causal = bspline(order)?;
    let centered = causal.centered();
    let sf = kernel::strang_fix_order(&causal, order + 2, kernel::STRANG_FIX_TOL);
    let autocorr = autocorrelation_sequence(&centered, order);
    let (riesz_min, at) = dfilter::symbol_minimum(&autocorr, DEFAULT_GRID)?;
    let riesz_max = autocorr.symbol(&[0.0]).re;
    let prefilter = dfilter::interpolation_prefilter(&centered, DEFAULT_GRID);
    let dual = dfilter::dual_filter(&centered, DEFAULT_GRID);
    let passed = sf == order && riesz_min > 0.0 && prefilter.is_ok() && dual.is_ok();
    let doc = json!({
        "version": harness::report::version_stamp(),
        "order": order,
        "kernel": causal.to_json(),
        "strang_fix_order": sf,
        "integer_samples": dfilter::sample_kernel(&centered).to_json(),
        "autocorrelation": autocorr.to_json(),
        "riesz_bounds": {"lower": riesz_min, "lower_at": at, "upper": riesz_max},
        "prefilter": prefilter.as_ref().map(|f| f.to_json()).unwrap_or_else(|e| json!(e.to_string())),
        "dual_filter": dual.as_ref().map(|f| f.to_json()).unwrap_or_else(|e| json!(e.to_string())),
        "passed": passed,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    write(&cli.out, "kernel.json", &text)?;
    println!("order {order}: Strang-Fix order {sf}, Riesz bounds [{riesz_min:.6e}, {riesz_max:.6e}]");
    if let Err(e) = &prefilter {
        println!("prefilter: {e}");
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Check { config } => check(&cli, config),
        Command::CertifyKernel { order } => certify(&cli, *order),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

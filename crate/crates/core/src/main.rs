use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use fairboard::fairness::{fairness_report, select_records, EnvFilter, FairnessReport, ReportOptions};
use fairboard::ingest::discover_runs;
use fairboard::server::{serve, RouterOptions, ServeConfig};
use fairboard::slicing::{GroupMetrics, Metric};
use fairboard::synthgen::{generate_scenario, verify, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "fairboard",
    version,
    about = "Training-run observability with slice-level fairness metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the JSON API over a log directory.
    Serve {
        #[arg(long)]
        logdir: PathBuf,
        #[arg(long, default_value_t = 6070)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 5.0)]
        rescan_secs: f64,
        /// Seed for reservoir downsampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Static dashboard assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Allowed CORS origin (any origin when omitted).
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// Print a one-shot fairness report for one run.
    Audit {
        #[arg(long)]
        logdir: PathBuf,
        #[arg(long)]
        run: String,
        /// Comma-separated slicing attributes.
        #[arg(long, value_delimiter = ',', required = true)]
        axes: Vec<String>,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// Epoch to audit (latest when omitted).
        #[arg(long)]
        epoch: Option<u32>,
        #[arg(long, default_value = "in")]
        env: EnvFilter,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic scenario under `--out`.
    Generate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario spec (JSON) for `--scenario custom`.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Check generated run directories against their truth manifests.
    Verify {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
}

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Serve {
            logdir,
            port,
            host,
            rescan_secs,
            seed,
            assets,
            cors_origin,
        } => {
            if !rescan_secs.is_finite() || rescan_secs <= 0.0 {
                return Err("--rescan-secs must be positive and finite".into());
            }
            let config = ServeConfig {
                logdir,
                addr: SocketAddr::new(host, port),
                rescan_interval: Duration::from_secs_f64(rescan_secs),
                seed,
                router: RouterOptions { cors_origin, assets },
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime.block_on(serve(config)).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit {
            logdir,
            run,
            axes,
            metric,
            threshold,
            iou_threshold,
            epoch,
            env,
            json,
        } => {
            let catalog = discover_runs(&logdir).map_err(|e| e.to_string())?;
            let run_ref = catalog
                .get(&run)
                .ok_or_else(|| format!("no run named {run:?} in {}", logdir.display()))?;
            let (records, epoch) = select_records(&run_ref.predictions, env, epoch);
            let epoch = epoch.ok_or_else(|| format!("run {run:?} has no matching prediction records"))?;
            let options = ReportOptions {
                metric,
                threshold,
                iou_threshold,
            };
            let report = fairness_report(&records, &axes, &options).map_err(|e| format!("{}: {e}", e.code()))?;
            if json {
                out!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            } else {
                print_report(&run, epoch, &report);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            scenario,
            out,
            seed,
            spec,
        } => {
            let dirs = generate_scenario(scenario, &out, seed, spec.as_deref()).map_err(|e| e.to_string())?;
            for d in dirs {
                out!("{}", d.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { run_dirs } => {
            let mut ok = true;
            for dir in run_dirs {
                let report = verify(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                if report.passed() {
                    out!("PASS {} ({} checks)", dir.display(), report.checks);
                } else {
                    ok = false;
                    out!(
                        "FAIL {} ({} of {} checks)",
                        dir.display(),
                        report.mismatches.len(),
                        report.checks
                    );
                    for m in &report.mismatches {
                        let measured = m.measured.map_or("missing".to_string(), |v| format!("{v:.6}"));
                        out!(
                            "  {}: expected {:.6}, measured {measured}, tolerance {:.6}",
                            m.what,
                            m.expected,
                            m.tolerance
                        );
                    }
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

fn print_report(run: &str, epoch: u32, report: &FairnessReport) {
    out!(
        "run {run}, epoch {epoch}, axes {}, metric {}",
        report.axes.join(","),
        report.metric
    );
    let columns = [
        Metric::PositiveRate,
        Metric::Tpr,
        Metric::Fpr,
        Metric::Precision,
        Metric::Accuracy,
        Metric::Auc,
        Metric::Ap,
    ];
    let width = report
        .groups
        .iter()
        .map(|g| g.group.label().len())
        .max()
        .unwrap_or(0)
        .max(5);
    print!("{:<width$} {:>7}", "group", "n");
    for c in columns {
        print!(" {:>13}", c.as_str());
    }
    out!();
    let row = |g: &GroupMetrics| {
        print!("{:<width$} {:>7}", g.group.label(), g.n);
        for c in columns {
            print!(" {:>13}", fmt(g.get(c)));
        }
        out!();
    };
    report.groups.iter().for_each(row);
    row(&report.overall);
    let d = &report.disparity;
    out!();
    out!("dp_gap      {}", fmt(d.dp_gap));
    out!("tpr_gap     {}", fmt(d.tpr_gap));
    out!("fpr_gap     {}", fmt(d.fpr_gap));
    out!("eo_diff     {}", fmt(d.eo_diff));
    out!("{:<11} {}", format!("{}_gap", d.metric), fmt(d.metric_gap));
    if let (Some(best), Some(worst)) = (&d.best_group, &d.worst_group) {
        out!("best        {best}");
        out!("worst       {worst}");
    }
    if !d.low_support.is_empty() {
        let labels: Vec<String> = d.low_support.iter().map(|k| k.label()).collect();
        out!("LOW_SUPPORT {}", labels.join("; "));
    }
}

//! Command-line harness for the radar touch-localization pipeline.
//!
//! Every subcommand operates on a *run directory* of persisted artifacts, so
//! stages can run one at a time, in separate processes, and inspect each
//! other's outputs:
//!
//! ```text
//! radtouch simulate      --run-dir runs/a [--config cfg.toml] [--seed 7] [--paper-scale]
//! radtouch calibrate     --run-dir runs/a
//! radtouch csp-eval      --run-dir runs/a
//! radtouch train         --run-dir runs/a [--seed 7]
//! radtouch cnn-eval      --run-dir runs/a
//! radtouch bench-latency --run-dir runs/a
//! radtouch report        --run-dir runs/a [--method csp|cnn|both]
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a stage's
//! inputs are missing (run the named stage first), 4 for runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use radtouch_core::config::AppConfig;
use radtouch_core::pipeline::{
    stage_bench_latency, stage_calibrate, stage_cnn_eval, stage_csp_eval, stage_report,
    stage_simulate, stage_train, MethodSelection,
};
use radtouch_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DEPENDENCY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "radtouch",
    version,
    about = "Simulate, calibrate, train, and benchmark a 4-sensor FMCW radar touch localizer"
)]
struct Cli {
    /// TOML configuration file. `simulate` snapshots it into the run
    /// directory; the other stages use that snapshot unless this flag is
    /// given explicitly.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory holding all artifacts of one experiment.
    #[arg(long, global = true, value_name = "DIR", default_value = "runs/default")]
    run_dir: PathBuf,

    /// Random seed: session synthesis for `simulate`, parameter
    /// initialization and batch shuffling for `train`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize all sessions; write the dataset container, the per-event
    /// range table, and the run summary
    Simulate {
        /// Use the full measurement protocol (50 train / 15 val-test
        /// sessions) instead of the configured desk-scale session counts
        #[arg(long)]
        paper_scale: bool,
    },
    /// Estimate per-sensor range offsets from the training split
    Calibrate,
    /// Locate test-split events with the conventional positioner
    CspEval,
    /// Train the network on the train split, selecting by validation loss
    Train,
    /// Locate test-split events with the trained network
    CnnEval,
    /// Measure single-sample inference latency of the trained network
    BenchLatency,
    /// Render summary tables, RMSE maps, error CDFs, and SVG heatmaps
    Report {
        /// Positioning method(s) to include
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Csp,
    Cnn,
    Both,
}

impl From<MethodArg> for MethodSelection {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Csp => MethodSelection::Csp,
            MethodArg::Cnn => MethodSelection::Cnn,
            MethodArg::Both => MethodSelection::Both,
        }
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::Geometry(_) => EXIT_CONFIG,
        Error::MissingDependency(_) => EXIT_DEPENDENCY,
        _ => EXIT_RUNTIME,
    }
}

/// The explicit `--config` override for post-simulate stages, if any.
fn config_override(cli: &Cli) -> radtouch_core::Result<Option<AppConfig>> {
    cli.config.as_deref().map(AppConfig::load).transpose()
}

fn run(cli: &Cli) -> radtouch_core::Result<()> {
    let run_dir = &cli.run_dir;
    match &cli.command {
        Command::Simulate { paper_scale } => {
            let config = match &cli.config {
                Some(path) => AppConfig::load(path)?,
                None => AppConfig::default(),
            };
            let seed = cli.seed.unwrap_or(7);
            let summary = stage_simulate(&config, run_dir, seed, *paper_scale)?;
            println!(
                "simulated {} sessions (seed {}): {} train / {} val / {} test events -> {}",
                summary.sessions.len(),
                summary.seed,
                summary.written.train_events,
                summary.written.val_events,
                summary.written.test_events,
                run_dir.display()
            );
        }
        Command::Calibrate => {
            let overridden = config_override(cli)?;
            let table = stage_calibrate(run_dir, overridden.as_ref())?;
            let offsets: Vec<String> = table
                .offsets_cm
                .iter()
                .enumerate()
                .map(|(i, v)| format!("sensor {i}: {v:+.4} cm"))
                .collect();
            println!("calibration offsets: {}", offsets.join(", "));
        }
        Command::CspEval => {
            let overridden = config_override(cli)?;
            let outcome = stage_csp_eval(run_dir, overridden.as_ref())?;
            print_eval("csp", &outcome.metrics);
        }
        Command::Train => {
            let overridden = config_override(cli)?;
            let report = stage_train(run_dir, overridden.as_ref(), cli.seed)?;
            println!(
                "trained {} epochs on {} events ({} parameters): best epoch {} \
                 with validation loss {:.4} cm^2 in {:.1} s",
                report.epochs.len(),
                report.n_train,
                report.param_count,
                report.best_epoch,
                report.best_val_loss_cm2,
                report.total_seconds
            );
        }
        Command::CnnEval => {
            let overridden = config_override(cli)?;
            let outcome = stage_cnn_eval(run_dir, overridden.as_ref())?;
            print_eval("cnn", &outcome.metrics);
        }
        Command::BenchLatency => {
            let overridden = config_override(cli)?;
            let stats = stage_bench_latency(run_dir, overridden.as_ref())?;
            println!(
                "inference latency over {} trials: median {:.3} ms, p90 {:.3} ms, \
                 mean {:.3} ms, min {:.3} ms, max {:.3} ms",
                stats.trials, stats.median_ms, stats.p90_ms, stats.mean_ms, stats.min_ms,
                stats.max_ms
            );
        }
        Command::Report { method } => {
            let overridden = config_override(cli)?;
            let report = stage_report(run_dir, overridden.as_ref(), (*method).into())?;
            for m in &report.methods {
                println!(
                    "{}: median {:.3} cm, p90 {:.3} cm, rmse-map median {:.3} cm \
                     ({} events, {} unavailable)",
                    m.method.as_str(),
                    m.median_error_cm,
                    m.p90_error_cm,
                    m.rmse_map_median_cm,
                    m.n_events,
                    m.n_unavailable
                );
            }
            match &report.latency {
                Some(l) => println!(
                    "latency: median {:.3} ms against a {:.3} ms budget ({}) \
                     and a {:.1} ms reference ({:.2}x)",
                    l.median_ms,
                    l.budget_ms,
                    if l.within_budget {
                        "within budget"
                    } else {
                        "over budget"
                    },
                    l.reference_ms,
                    l.ratio_to_reference
                ),
                None => println!("latency: not benchmarked (run `bench-latency`)"),
            }
            println!("report written to {}", run_dir.join("report").display());
        }
    }
    Ok(())
}

fn print_eval(method: &str, metrics: &radtouch_core::metrics::Metrics) {
    println!(
        "{method}: median {:.3} cm, p90 {:.3} cm over {} events \
         ({} unavailable); rmse-map median {:.3} cm, p90 {:.3} cm",
        metrics.median_error_cm,
        metrics.p90_error_cm,
        metrics.n_events,
        metrics.n_unavailable,
        metrics.rmse_map_median_cm,
        metrics.rmse_map_p90_cm
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

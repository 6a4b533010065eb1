//! Batch entry point for the simulation and analysis pipelines.
//!
//! One JSON config file describes one run: a subcommand name plus its
//! parameter block (see [`config`]). The binary validates the document,
//! writes a manifest into the output directory before any result file, runs
//! the pipeline, and finishes the manifest with timings and the result list.
//! A manifest left in `"status": "running"` therefore marks an aborted run.
//!
//! Exit codes are fixed so shell pipelines can branch on the failure class:
//! 0 success, 2 invalid configuration or input format, 3 numerical blow-up,
//! 4 insufficient data, 5 fit failure, 1 I/O or other unexpected errors.
//! Every failure also emits a machine-readable JSON record on stderr (and
//! into `error.json` when the output directory is available). Environment
//! variables are never consulted; everything that affects a run is in the
//! config, the flags, and the manifest.

mod commands;
mod config;
mod manifest;
mod recipe;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use crate::config::{Overrides, Subcommand};
use crate::manifest::Manifest;

const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_INSUFFICIENT: u8 = 4;
const EXIT_FIT: u8 = 5;
const EXIT_OTHER: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "kpz2d", version, about = "Lattice simulation and scaling-analysis runner")]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config document.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed; overrides the config document.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Multi-stage pipeline to run on top of the config (available:
    /// reproduce-beta, which expects a simulate-kpz document).
    #[arg(long)]
    recipe: Option<String>,
}

/// (exit code, error class) for an engine error.
fn classify(e: &kpz2d::Error) -> (u8, &'static str) {
    use kpz2d::Error;
    match e {
        Error::InvalidLattice(_) | Error::Parameter(_) | Error::BelowThreshold { .. } | Error::Format(_) => {
            (EXIT_CONFIG, "config-error")
        }
        Error::BlowUp { .. } | Error::ReservoirClamp { .. } => (EXIT_BLOWUP, "numerical-blow-up"),
        Error::InsufficientData(_) => (EXIT_INSUFFICIENT, "insufficient-data"),
        Error::FitFailure(_) => (EXIT_FIT, "fit-failure"),
        Error::Io(_) => (EXIT_OTHER, "io-error"),
    }
}

/// Prints the error record to stderr and, when an output directory is known,
/// mirrors it to error.json there.
fn report_error(exit_code: u8, class: &str, message: &str, output_dir: Option<&std::path::Path>) {
    let record = json!({
        "exit_code": exit_code,
        "class": class,
        "message": message,
    });
    eprintln!("{record}");
    if let Some(dir) = output_dir {
        if dir.is_dir() {
            let _ = std::fs::write(
                dir.join("error.json"),
                serde_json::to_string_pretty(&record).unwrap_or_default() + "\n",
            );
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let raw = match std::fs::read_to_string(&cli.config) {
        Ok(s) => s,
        Err(e) => {
            report_error(
                EXIT_CONFIG,
                "config-error",
                &format!("cannot read config {}: {e}", cli.config.display()),
                None,
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let doc: Value = match serde_json::from_str(&raw) {
        Ok(v) => v,
        Err(e) => {
            report_error(
                EXIT_CONFIG,
                "config-error",
                &format!("config is not valid JSON: {e}"),
                None,
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let base_dir = cli
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let overrides = Overrides { output: cli.output.clone(), seed: cli.seed };
    let run = match config::validate_config(&doc, &base_dir, &overrides) {
        Ok(rc) => rc,
        Err(errs) => {
            report_error(EXIT_CONFIG, "config-error", &errs.join("; "), None);
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if let Some(name) = &cli.recipe {
        if name != "reproduce-beta" {
            report_error(
                EXIT_CONFIG,
                "config-error",
                &format!("unknown recipe {name:?}; available: reproduce-beta"),
                None,
            );
            return ExitCode::from(EXIT_CONFIG);
        }
        if !matches!(run.subcommand, Subcommand::SimulateKpz(_)) {
            report_error(
                EXIT_CONFIG,
                "config-error",
                "recipe reproduce-beta needs a simulate-kpz config document",
                None,
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        report_error(EXIT_OTHER, "io-error", &format!("cannot build thread pool: {e}"), None);
        return ExitCode::from(EXIT_OTHER);
    }

    if let Err(e) = std::fs::create_dir_all(&run.output_dir) {
        report_error(
            EXIT_OTHER,
            "io-error",
            &format!("cannot create output directory {}: {e}", run.output_dir.display()),
            None,
        );
        return ExitCode::from(EXIT_OTHER);
    }

    let mut manifest = Manifest::new(&run, cli.recipe.as_deref(), workers);
    if let Err(e) = manifest.write_started(&run.output_dir) {
        report_error(EXIT_OTHER, "io-error", &format!("cannot write manifest: {e}"), None);
        return ExitCode::from(EXIT_OTHER);
    }

    let started = Instant::now();
    let outcome = match &cli.recipe {
        Some(_) => {
            let Subcommand::SimulateKpz(job) = &run.subcommand else {
                unreachable!("recipe precondition checked above");
            };
            recipe::reproduce_beta(job, &run.output_dir).map(|(results, stages)| {
                manifest.set_stages(stages);
                results
            })
        }
        None => commands::dispatch(&run),
    };

    match outcome {
        Ok(results) => {
            let wall = started.elapsed().as_secs_f64();
            if let Err(e) = manifest.write_complete(&run.output_dir, wall, &results) {
                report_error(
                    EXIT_OTHER,
                    "io-error",
                    &format!("run succeeded but the manifest could not be finished: {e}"),
                    Some(&run.output_dir),
                );
                return ExitCode::from(EXIT_OTHER);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, class) = classify(&e);
            report_error(code, class, &e.to_string(), Some(&run.output_dir));
            ExitCode::from(code)
        }
    }
}

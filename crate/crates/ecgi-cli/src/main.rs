//! Command-line front end for the inverse-ECG laboratory.
//!
//! Subcommands mirror the pipeline stages: `simulate` builds a dataset,
//! `train` fits one model variant, `evaluate` scores checkpoints and
//! classical baselines, `diagnose` probes loss-surface flatness and latent
//! geometry, and `repro` chains all four. Exit codes: 0 success, 1 usage or
//! config error, 2 runtime failure. Set `ECGI_THREADS` to bound the worker
//! pool.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod app;
mod config;
mod diagnose;
mod evaluate;
mod repro;
mod simulate;
mod train_cmd;

use app::{usage, AppError};

#[derive(Parser)]
#[command(
    name = "ecgi",
    version,
    about = "Inverse-ECG laboratory: simulate datasets, train sequence models, evaluate reconstructions, diagnose latent geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Simulate {
        /// Run config TOML; defaults reproduce the desk-scale experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config's dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train one model variant on a dataset.
    Train {
        /// Run config TOML; defaults reproduce the desk-scale experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory from `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Variant name, e.g. svs-stochastic.
        #[arg(long)]
        variant: String,
        /// Training seed.
        #[arg(long)]
        seed: u64,
        /// Directory for the checkpoint and loss curve.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing artifacts.
        #[arg(long)]
        force: bool,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Score checkpoints and classical baselines on dataset splits.
    Evaluate {
        /// Run config TOML (sets the baseline regularizer).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint files to evaluate.
        #[arg(long, num_args = 1.., value_name = "CKPT")]
        checkpoints: Vec<PathBuf>,
        /// Dataset directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for metrics.csv, summary.csv, and latent projections.
        #[arg(long)]
        out: PathBuf,
        /// Splits to score (comma-separated); default: the four held-out splits.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        splits: Option<Vec<String>>,
        /// Classical baselines to include: tikhonov, greensite.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        baseline: Vec<String>,
        /// Blank the greensite rows' mse/tmp_corr fields, which that method
        /// does not meaningfully optimize.
        #[arg(long)]
        paper_parity: bool,
        /// Overwrite existing artifacts.
        #[arg(long)]
        force: bool,
    },
    /// Loss-surface and latent-geometry diagnostics for checkpoints.
    Diagnose {
        /// Checkpoint files to diagnose.
        #[arg(long, num_args = 1.., value_name = "CKPT", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Dataset directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for diagnostics.csv and silhouettes.csv.
        #[arg(long)]
        out: PathBuf,
        /// Also write taylor.csv: Monte-Carlo vs. second-order Taylor
        /// expected loss on built-in quadratic decoders.
        #[arg(long)]
        taylor_check: bool,
        /// Overwrite existing artifacts.
        #[arg(long)]
        force: bool,
    },
    /// Full pipeline: simulate, train every variant × seed, evaluate, diagnose.
    Repro {
        /// Run config TOML; defaults reproduce the desk-scale experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output root; defaults to the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing output root.
        #[arg(long)]
        force: bool,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match init_thread_pool().and_then(|()| dispatch(cli)) {
        Ok(()) => 0,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Applies `ECGI_THREADS` to the global worker pool; unset means the
/// default (one worker per core).
fn init_thread_pool() -> app::Result<()> {
    let Ok(raw) = std::env::var("ECGI_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("ECGI_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|err| AppError::Runtime(format!("thread pool: {err}")))
}

fn dispatch(cli: Cli) -> app::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            force,
        } => {
            let config = config::load_config(config.as_deref())?;
            simulate::run(&config, &out, seed, force)
        }
        Command::Train {
            config,
            dataset,
            variant,
            seed,
            out,
            force,
            quiet,
        } => {
            let config = config::load_config(config.as_deref())?;
            let variant = config::parse_variant(&variant)?;
            train_cmd::run(&config, &dataset, variant, seed, &out, force, quiet)
        }
        Command::Evaluate {
            config,
            checkpoints,
            dataset,
            out,
            splits,
            baseline,
            paper_parity,
            force,
        } => {
            let config = config::load_config(config.as_deref())?;
            evaluate::run(
                &config,
                &checkpoints,
                &dataset,
                &out,
                splits.as_deref(),
                &baseline,
                paper_parity,
                force,
            )
        }
        Command::Diagnose {
            checkpoints,
            dataset,
            out,
            taylor_check,
            force,
        } => diagnose::run(&checkpoints, &dataset, &out, taylor_check, force),
        Command::Repro {
            config,
            out,
            force,
            quiet,
        } => {
            let config = config::load_config(config.as_deref())?;
            let out = out.unwrap_or_else(|| config.out_dir.clone());
            repro::run(&config, &out, force, quiet)
        }
    }
}

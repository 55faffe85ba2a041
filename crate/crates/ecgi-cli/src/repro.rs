//! `ecgi repro`: the full pipeline in one call.
//!
//! Chains simulate → train (every variant × seed in the config, in a worker
//! pool) → evaluate (held-out splits plus both classical baselines) →
//! diagnose, laying the artifacts out as
//!
//! ```text
//! out/
//!   dataset/       generated samples + manifest
//!   train/         <variant>-seed<N>.ckpt and loss curves
//!   eval/          metrics.csv, summary.csv, latent projections
//!   diagnostics/   diagnostics.csv, silhouettes.csv
//! ```
//!
//! Every stage is seeded from the config, and parallel jobs write to
//! distinct files, so two runs with the same config produce byte-identical
//! CSVs.

use std::path::{Path, PathBuf};

use ecgi::checkpoint::save_checkpoint;
use ecgi::dataset;
use ecgi::model::ModelVariant;
use ecgi::train::write_loss_curve;
use rayon::prelude::*;

use crate::app::{ensure_dir, ensure_writable, Result};
use crate::config::RunConfig;
use crate::{diagnose, evaluate, simulate, train_cmd};

/// Runs the whole pipeline under `out`.
pub fn run(config: &RunConfig, out: &Path, force: bool, quiet: bool) -> Result<()> {
    ensure_writable(out, force)?;
    if force && out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    let dataset_dir = out.join("dataset");
    let train_dir = out.join("train");
    let eval_dir = out.join("eval");
    let diag_dir = out.join("diagnostics");

    simulate::run(config, &dataset_dir, None, false)?;

    let data = dataset::load_dataset(&dataset_dir)?;
    ensure_dir(&train_dir)?;
    let jobs: Vec<(ModelVariant, u64)> = config
        .variants
        .iter()
        .flat_map(|&variant| config.seeds.iter().map(move |&seed| (variant, seed)))
        .collect();
    let checkpoints: Vec<PathBuf> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let model_config = train_cmd::dataset_model_config(config, &data, variant);
            let outcome = train_cmd::train_one(&model_config, &data, config, seed, quiet)?;
            let (ckpt_path, curve_path) = train_cmd::artifact_paths(&train_dir, variant, seed);
            save_checkpoint(&ckpt_path, &outcome.checkpoint)?;
            write_loss_curve(&curve_path, &outcome.curve)?;
            println!(
                "trained {} seed {}: best epoch {} (val {:.6})",
                variant.name(),
                seed,
                outcome.best_epoch,
                outcome.checkpoint.best_val_loss,
            );
            Ok(ckpt_path)
        })
        .collect::<Result<_>>()?;

    let baselines = ["tikhonov".to_string(), "greensite".to_string()];
    evaluate::run(
        config,
        &checkpoints,
        &dataset_dir,
        &eval_dir,
        None,
        &baselines,
        false,
        false,
    )?;
    diagnose::run(&checkpoints, &dataset_dir, &diag_dir, false, false)?;
    println!("repro complete: {}", out.display());
    Ok(())
}

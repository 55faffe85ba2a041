//! `ecgi train`: train one variant on a dataset and persist the checkpoint
//! and loss curve.

use std::path::{Path, PathBuf};

use ecgi::checkpoint::save_checkpoint;
use ecgi::dataset::{self, LoadedDataset};
use ecgi::model::{ModelConfig, ModelVariant};
use ecgi::train::{self, TrainOutcome};

use crate::app::{ensure_dir, ensure_writable, Result};
use crate::config::RunConfig;

/// Artifact paths for one (variant, seed) training run under `dir`.
pub fn artifact_paths(dir: &Path, variant: ModelVariant, seed: u64) -> (PathBuf, PathBuf) {
    let stem = format!("{}-seed{}", variant.name(), seed);
    (dir.join(format!("{stem}.ckpt")), dir.join(format!("{stem}-curve.csv")))
}

/// Trains `variant` with `seed` and writes `<variant>-seed<seed>.ckpt` and
/// `<variant>-seed<seed>-curve.csv` under `out`.
pub fn run(
    config: &RunConfig,
    dataset_dir: &Path,
    variant: ModelVariant,
    seed: u64,
    out: &Path,
    force: bool,
    quiet: bool,
) -> Result<()> {
    let data = dataset::load_dataset(dataset_dir)?;
    let model_config = dataset_model_config(config, &data, variant);
    let (ckpt_path, curve_path) = artifact_paths(out, variant, seed);
    ensure_writable(&ckpt_path, force)?;
    ensure_writable(&curve_path, force)?;
    ensure_dir(out)?;

    let outcome = train_one(&model_config, &data, config, seed, quiet)?;
    save_checkpoint(&ckpt_path, &outcome.checkpoint)?;
    train::write_loss_curve(&curve_path, &outcome.curve)?;
    println!(
        "{} seed {}: best epoch {} (val {:.6}), {} epochs{}",
        variant.name(),
        seed,
        outcome.best_epoch,
        outcome.checkpoint.best_val_loss,
        outcome.curve.len(),
        if outcome.stopped_early { ", stopped early" } else { "" },
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("curve: {}", curve_path.display());
    Ok(())
}

/// Builds the model config for this dataset's dimensions.
pub fn dataset_model_config(
    config: &RunConfig,
    data: &LoadedDataset,
    variant: ModelVariant,
) -> ModelConfig {
    let dc = &data.manifest.config;
    ModelConfig {
        variant,
        input_dim: dc.transfer.electrodes,
        output_dim: dc.geometry.nodes,
        seq_len: dc.frames,
        encoder_hidden: config.model.encoder_hidden,
        latent_dim: config.model.latent_dim,
        mc_samples: config.model.mc_samples,
    }
}

/// Runs the training loop, reporting epoch progress on stderr.
pub fn train_one(
    model_config: &ModelConfig,
    data: &LoadedDataset,
    config: &RunConfig,
    seed: u64,
    quiet: bool,
) -> Result<TrainOutcome> {
    let variant = model_config.variant.name();
    let outcome = train::train_with(model_config, data, &config.train, seed, |stats| {
        if !quiet {
            eprintln!(
                "[{variant} seed {seed}] epoch {}: train {:.6} val {:.6}",
                stats.epoch, stats.train_total, stats.val_total
            );
        }
    })?;
    Ok(outcome)
}

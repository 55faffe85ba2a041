//! `ecgi diagnose`: flatness, latent-geometry, and surrogate-accuracy
//! diagnostics for trained checkpoints.
//!
//! Writes `diagnostics.csv` (one row per checkpoint: loss-surface variation
//! proxies around the validation latents, the anchored-box discrepancy
//! between the sampled latent cloud and a standard normal cloud, and the
//! mean validation KL) and `silhouettes.csv` (latent cluster scores over the
//! pooled held-out splits). With `--taylor-check` it also writes
//! `taylor.csv`, a Monte-Carlo vs. second-order-Taylor comparison on random
//! quadratic decoders where the expansion is exact.

use std::path::{Path, PathBuf};

use ecgi::dataset::{self, LoadedDataset};
use ecgi::eval::analyze_latents;
use ecgi::loss::kl_diag_gaussian;
use ecgi::model::reparameterize;
use ecgi::rng::{derive_seed, fill_standard_normal, stream, StreamKind};
use ecgi::tensor::Tensor;
use ecgi::theory::{
    anchored_box_discrepancy, expected_loss_mc, taylor_expected_loss, variation_proxy,
    FrozenScaleDecoderLoss, LatentProbe, QuadraticObjective, DEFAULT_PROBE_STEP,
};

use crate::app::{ensure_dir, ensure_writable, AppError, Result};
use crate::evaluate::{default_splits, load_checkpoints, LoadedCheckpoint};

/// Number of random quadratic instances in the `--taylor-check` table.
const TAYLOR_INSTANCES: usize = 20;
/// Monte-Carlo draws per instance.
const TAYLOR_MC_SAMPLES: usize = 100_000;

/// Runs all diagnostics and writes the CSV artifacts under `out`.
pub fn run(
    checkpoint_paths: &[PathBuf],
    dataset_dir: &Path,
    out: &Path,
    taylor_check: bool,
    force: bool,
) -> Result<()> {
    let data = dataset::load_dataset(dataset_dir)?;
    let checkpoints = load_checkpoints(checkpoint_paths, &data)?;

    let diagnostics_path = out.join("diagnostics.csv");
    let silhouettes_path = out.join("silhouettes.csv");
    let taylor_path = out.join("taylor.csv");
    ensure_writable(&diagnostics_path, force)?;
    ensure_writable(&silhouettes_path, force)?;
    if taylor_check {
        ensure_writable(&taylor_path, force)?;
    }
    ensure_dir(out)?;

    write_diagnostics(&diagnostics_path, &checkpoints, &data)?;
    println!("diagnostics: {}", diagnostics_path.display());
    write_silhouettes(&silhouettes_path, &checkpoints, &data)?;
    println!("silhouettes: {}", silhouettes_path.display());
    if taylor_check {
        write_taylor_table(&taylor_path)?;
        println!("taylor check: {}", taylor_path.display());
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path)
        .map_err(|err| AppError::Runtime(format!("{}: {err}", path.display())))
}

fn csv_fail(path: &Path, err: csv::Error) -> AppError {
    AppError::Runtime(format!("{}: {err}", path.display()))
}

/// Variation proxies, latent-cloud discrepancy, and mean KL per checkpoint.
fn write_diagnostics(
    path: &Path,
    checkpoints: &[LoadedCheckpoint],
    data: &LoadedDataset,
) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer
        .write_record(["model", "seed", "mean_abs_grad", "mean_abs_hess", "discrepancy", "kl"])
        .map_err(|err| csv_fail(path, err))?;
    for loaded in checkpoints {
        let row = diagnose_checkpoint(loaded, data)?;
        writer
            .write_record([
                row.model,
                row.seed.to_string(),
                row.mean_abs_grad.to_string(),
                row.mean_abs_hess.to_string(),
                row.discrepancy.to_string(),
                row.kl.to_string(),
            ])
            .map_err(|err| csv_fail(path, err))?;
    }
    writer.flush()?;
    Ok(())
}

struct DiagnosticsRow {
    model: String,
    seed: u64,
    mean_abs_grad: f64,
    mean_abs_hess: f64,
    discrepancy: f64,
    kl: f64,
}

/// Probes the decoder loss surface at each validation latent and compares
/// the sampled latent cloud against an equal-size standard normal cloud.
fn diagnose_checkpoint(loaded: &LoadedCheckpoint, data: &LoadedDataset) -> Result<DiagnosticsRow> {
    let model = &loaded.model;
    let theta = loaded.ckpt.params.as_slice();
    let master = loaded.ckpt.master_seed;
    let samples = data.validation()?;
    let d = model.config().latent_len();

    let mut probes = Vec::with_capacity(samples.len());
    let mut latent_cloud = Tensor::zeros(&[samples.len().max(1), d]);
    let mut kl_sum = 0.0;
    for (i, sample) in samples.iter().enumerate() {
        let dist = model.encode(theta, &sample.ecg)?;
        let objective = FrozenScaleDecoderLoss::new(model, theta, &sample.tmp, &dist.mean)?;
        probes.push(LatentProbe {
            objective,
            center: dist.mean.clone(),
        });
        let draw = reparameterize(&dist, derive_seed(master, StreamKind::Diagnostics, i as u64));
        latent_cloud.row_mut(i).copy_from_slice(&draw);
        if let Some(log_var) = &dist.log_var {
            kl_sum += kl_diag_gaussian(&dist.mean, log_var)?;
        }
    }

    let variation = variation_proxy(&probes, DEFAULT_PROBE_STEP, model.config().variant.name())?;

    let mut reference = Tensor::zeros(&[samples.len().max(1), d]);
    fill_standard_normal(
        &mut stream(master, StreamKind::Diagnostics, 0),
        reference.as_mut_slice(),
    );
    let discrepancy = anchored_box_discrepancy(&latent_cloud, &reference)?;

    Ok(DiagnosticsRow {
        model: model.config().variant.name().to_string(),
        seed: master,
        mean_abs_grad: variation.mean_abs_grad,
        mean_abs_hess: variation.mean_abs_hess,
        discrepancy: discrepancy.statistic,
        kl: kl_sum / samples.len() as f64,
    })
}

/// Silhouette scores of the latent means over the pooled held-out splits,
/// once under excitation-quarter labels and once under scar-arc labels.
fn write_silhouettes(
    path: &Path,
    checkpoints: &[LoadedCheckpoint],
    data: &LoadedDataset,
) -> Result<()> {
    let mut pool = Vec::new();
    for split in default_splits() {
        pool.extend(data.split(&split)?);
    }
    let mut writer = csv_writer(path)?;
    writer
        .write_record(["model", "seed", "exc_silhouette", "scar_silhouette"])
        .map_err(|err| csv_fail(path, err))?;
    for loaded in checkpoints {
        match analyze_latents(&loaded.model, &loaded.ckpt.params, &pool) {
            Ok(analysis) => {
                writer
                    .write_record([
                        loaded.model.config().variant.name().to_string(),
                        loaded.ckpt.master_seed.to_string(),
                        analysis.exc_silhouette.to_string(),
                        analysis.scar_silhouette.to_string(),
                    ])
                    .map_err(|err| csv_fail(path, err))?;
            }
            Err(ecgi::Error::InvalidArgument(msg)) => eprintln!(
                "skipping silhouettes for {}: {msg}",
                loaded.stem
            ),
            Err(err) => return Err(err.into()),
        }
    }
    writer.flush()?;
    Ok(())
}

/// Monte-Carlo vs. Taylor expected loss on random quadratic decoders.
///
/// The order-2 expansion is exact for this family, so the two estimates
/// must agree up to Monte-Carlo error; each row records whether they land
/// within three standard errors.
fn write_taylor_table(path: &Path) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer
        .write_record(["instance", "taylor", "mc_mean", "mc_std_err", "within_3se"])
        .map_err(|err| csv_fail(path, err))?;
    for instance in 0..TAYLOR_INSTANCES {
        let seed = instance as u64;
        let objective = QuadraticObjective::random(6, 4, seed);
        let mut rng = stream(seed, StreamKind::Diagnostics, 1);
        let mut t = vec![0.0; 4];
        let mut sigma = vec![0.0; 4];
        fill_standard_normal(&mut rng, &mut t);
        fill_standard_normal(&mut rng, &mut sigma);
        for s in &mut sigma {
            *s = 0.1 + 0.5 * s.abs();
        }
        let taylor = taylor_expected_loss(&objective, &t, &sigma, DEFAULT_PROBE_STEP)?;
        let mc = expected_loss_mc(&objective, &t, &sigma, TAYLOR_MC_SAMPLES, seed + 1)?;
        let within = (taylor - mc.mean).abs() <= 3.0 * mc.std_err;
        writer
            .write_record([
                instance.to_string(),
                taylor.to_string(),
                mc.mean.to_string(),
                mc.std_err.to_string(),
                within.to_string(),
            ])
            .map_err(|err| csv_fail(path, err))?;
    }
    writer.flush()?;
    Ok(())
}

//! `ecgi evaluate`: reconstruction metrics for checkpoints and classical
//! baselines over dataset splits.
//!
//! Writes `metrics.csv` (one row per sample), `summary.csv` (one row per
//! model/split/seed group with mean, std, and defined counts), and one
//! `latents-<checkpoint>.csv` per checkpoint with 2-D latent projections.
//! With `--paper-parity`, the greensite baseline's `mse` and `tmp_corr`
//! fields are left blank: that method whitens away the signal shape those
//! metrics grade, so only activation-time and scar metrics are reported.

use std::path::{Path, PathBuf};

use ecgi::checkpoint::{self, ModelCheckpoint};
use ecgi::dataset::{self, test_bands, test_split_name, LoadedDataset, LoadedSample};
use ecgi::eval::{
    self, analyze_latents, LatentAnalysis, Reconstructor, SampleMetrics, SplitSummary,
};
use ecgi::forward::TransferMatrix;
use ecgi::model::Seq2Seq;

use crate::app::{ensure_dir, ensure_writable, usage, AppError, Result};
use crate::config::RunConfig;

/// Which classical baselines to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BaselineSelection {
    /// Frame-by-frame Tikhonov.
    pub tikhonov: bool,
    /// Greensite temporal whitening.
    pub greensite: bool,
}

/// Parses `--baseline` values.
pub fn parse_baselines(names: &[String]) -> Result<BaselineSelection> {
    let mut selection = BaselineSelection::default();
    for name in names {
        match name.as_str() {
            "tikhonov" => selection.tikhonov = true,
            "greensite" => selection.greensite = true,
            other => {
                return Err(usage(format!(
                    "unknown baseline {other:?}; valid baselines: tikhonov, greensite"
                )))
            }
        }
    }
    Ok(selection)
}

/// The four held-out split names, the default evaluation set.
pub fn default_splits() -> Vec<String> {
    test_bands()
        .iter()
        .map(|&(scar, exc)| test_split_name(scar, exc))
        .collect()
}

/// Resolves and validates the split selection against the dataset.
///
/// `None` (flag absent) means the four held-out splits; an explicit empty
/// selection is a usage error.
pub fn resolve_splits(data: &LoadedDataset, requested: Option<&[String]>) -> Result<Vec<String>> {
    let splits = match requested {
        None => default_splits(),
        Some(list) => list.to_vec(),
    };
    if splits.is_empty() {
        return Err(usage("no splits selected"));
    }
    for split in &splits {
        data.split(split).map_err(|err| usage(err.to_string()))?;
    }
    Ok(splits)
}

/// One loaded checkpoint ready to evaluate.
pub struct LoadedCheckpoint {
    /// File stem, used to name per-checkpoint outputs.
    pub stem: String,
    /// The checkpoint contents.
    pub ckpt: ModelCheckpoint,
    /// Model built from the embedded config.
    pub model: Seq2Seq,
}

/// Loads checkpoints and cross-checks each against the dataset dimensions.
pub fn load_checkpoints(paths: &[PathBuf], data: &LoadedDataset) -> Result<Vec<LoadedCheckpoint>> {
    let dc = &data.manifest.config;
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let ckpt = checkpoint::load_checkpoint(path)?;
        let model = ckpt.validate()?;
        let mc = model.config();
        if mc.input_dim != dc.transfer.electrodes
            || mc.output_dim != dc.geometry.nodes
            || mc.seq_len != dc.frames
        {
            return Err(AppError::Runtime(format!(
                "{}: model is {}x{} over {} nodes; dataset is {}x{} over {} nodes",
                path.display(),
                mc.input_dim,
                mc.seq_len,
                mc.output_dim,
                dc.transfer.electrodes,
                dc.frames,
                dc.geometry.nodes,
            )));
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("checkpoint")
            .to_string();
        out.push(LoadedCheckpoint { stem, ckpt, model });
    }
    Ok(out)
}

/// Runs the full evaluation and writes every artifact under `out`.
#[allow(clippy::too_many_arguments)]
pub fn run(
    config: &RunConfig,
    checkpoint_paths: &[PathBuf],
    dataset_dir: &Path,
    out: &Path,
    requested_splits: Option<&[String]>,
    baseline_names: &[String],
    paper_parity: bool,
    force: bool,
) -> Result<()> {
    let baselines = parse_baselines(baseline_names)?;
    let data = dataset::load_dataset(dataset_dir)?;
    let splits = resolve_splits(&data, requested_splits)?;
    let split_refs: Vec<&str> = splits.iter().map(String::as_str).collect();
    let checkpoints = load_checkpoints(checkpoint_paths, &data)?;
    if checkpoints.is_empty() && !baselines.tikhonov && !baselines.greensite {
        return Err(usage("nothing to evaluate: no checkpoints and no baselines"));
    }

    let metrics_path = out.join("metrics.csv");
    let summary_path = out.join("summary.csv");
    ensure_writable(&metrics_path, force)?;
    ensure_writable(&summary_path, force)?;
    ensure_dir(out)?;

    let mut rows: Vec<SampleMetrics> = Vec::new();
    for loaded in &checkpoints {
        let recon = Reconstructor::Model {
            model: &loaded.model,
            theta: &loaded.ckpt.params,
        };
        rows.extend(eval::evaluate_splits(
            &recon,
            &data,
            &split_refs,
            loaded.ckpt.master_seed,
        )?);
    }
    let transfer = build_transfer(&data)?;
    if baselines.tikhonov {
        let recon = Reconstructor::Tikhonov {
            transfer: &transfer,
            config: config.regularizer,
        };
        rows.extend(eval::evaluate_splits(&recon, &data, &split_refs, 0)?);
    }
    if baselines.greensite {
        let recon = Reconstructor::Greensite {
            transfer: &transfer,
            config: config.regularizer,
        };
        rows.extend(eval::evaluate_splits(&recon, &data, &split_refs, 0)?);
    }

    write_metrics(&metrics_path, &rows, paper_parity)?;
    let summaries = eval::summarize(&rows);
    write_summary(&summary_path, &summaries, paper_parity)?;
    println!("metrics: {}", metrics_path.display());
    println!("summary: {}", summary_path.display());

    for loaded in &checkpoints {
        let path = out.join(format!("latents-{}.csv", loaded.stem));
        ensure_writable(&path, force)?;
        match latent_analysis(loaded, &data, &split_refs)? {
            Some(analysis) => {
                eval::write_projection_csv(&path, &analysis)?;
                println!("latents: {}", path.display());
            }
            None => eprintln!(
                "skipping latent projection for {}: labels are single-valued on this selection",
                loaded.stem
            ),
        }
    }
    Ok(())
}

/// Builds the transfer model recorded in the dataset manifest.
pub fn build_transfer(data: &LoadedDataset) -> Result<TransferMatrix> {
    let dc = &data.manifest.config;
    let graph = dc.geometry.build()?;
    Ok(dc.transfer.build(&graph)?)
}

/// Encodes the pooled selection; `None` when the label families collapse to
/// a single value (a legitimate outcome for narrow selections, not an error).
fn latent_analysis(
    loaded: &LoadedCheckpoint,
    data: &LoadedDataset,
    splits: &[&str],
) -> Result<Option<LatentAnalysis>> {
    let mut pool: Vec<&LoadedSample> = Vec::new();
    for split in splits {
        pool.extend(data.split(split)?);
    }
    match analyze_latents(&loaded.model, &loaded.ckpt.params, &pool) {
        Ok(analysis) => Ok(Some(analysis)),
        Err(ecgi::Error::InvalidArgument(_)) => Ok(None),
        Err(err) => Err(err.into()),
    }
}

/// Should this row's TMP-shape metrics be blanked?
fn blank_shape_metrics(row_model: &str, paper_parity: bool) -> bool {
    paper_parity && row_model == "greensite"
}

/// Writes per-sample rows, blanking greensite's `mse`/`tmp_corr` under
/// `--paper-parity`.
fn write_metrics(path: &Path, rows: &[SampleMetrics], paper_parity: bool) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|err| AppError::Runtime(format!("{}: {err}", path.display())))?;
    let fail = |err: csv::Error| AppError::Runtime(format!("{}: {err}", path.display()));
    writer
        .write_record(["model", "split", "seed", "sample", "mse", "tmp_corr", "at_corr", "dice"])
        .map_err(fail)?;
    for row in rows {
        let blank = blank_shape_metrics(&row.model, paper_parity);
        let field = |v: f64| if blank { String::new() } else { v.to_string() };
        writer
            .write_record([
                row.model.clone(),
                row.split.clone(),
                row.seed.to_string(),
                row.sample.to_string(),
                field(row.mse),
                field(row.tmp_corr),
                row.at_corr.to_string(),
                row.dice.to_string(),
            ])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes grouped summaries with the same blanking rule.
fn write_summary(path: &Path, summaries: &[SplitSummary], paper_parity: bool) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|err| AppError::Runtime(format!("{}: {err}", path.display())))?;
    let fail = |err: csv::Error| AppError::Runtime(format!("{}: {err}", path.display()));
    writer
        .write_record([
            "model",
            "split",
            "seed",
            "samples",
            "mse_mean",
            "mse_std",
            "mse_defined",
            "tmp_corr_mean",
            "tmp_corr_std",
            "tmp_corr_defined",
            "at_corr_mean",
            "at_corr_std",
            "at_corr_defined",
            "dice_mean",
            "dice_std",
            "dice_defined",
        ])
        .map_err(fail)?;
    for s in summaries {
        let blank = blank_shape_metrics(&s.model, paper_parity);
        let mut record = vec![
            s.model.clone(),
            s.split.clone(),
            s.seed.to_string(),
            s.samples.to_string(),
        ];
        for (metric, blanked) in [
            (&s.mse, blank),
            (&s.tmp_corr, blank),
            (&s.at_corr, false),
            (&s.dice, false),
        ] {
            if blanked {
                record.extend([String::new(), String::new(), String::new()]);
            } else {
                record.push(metric.mean.to_string());
                record.push(metric.std.to_string());
                record.push(metric.defined.to_string());
            }
        }
        writer.write_record(&record).map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

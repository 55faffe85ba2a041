//! Evaluation over dataset splits: reconstruction metrics per sample,
//! grouped summaries, and latent-space cluster diagnostics.
//!
//! A [`Reconstructor`] maps one observed ECG back to a TMP sequence, either
//! through a trained network (decoding the encoder's latent mean — evaluation
//! is deterministic, no reparameterization draws) or through one of the
//! classical regularized baselines. Every sample yields one [`SampleMetrics`]
//! row with `NaN` marking metrics that are undefined for that sample (for
//! example a correlation against a constant sequence); summaries average
//! the defined entries only and say how many there were.

use std::collections::BTreeSet;
use std::path::Path;

use crate::cluster::{self, Projection2d};
use crate::dataset::LoadedSample;
use crate::error::{Error, Result};
use crate::forward::TransferMatrix;
use crate::inverse::{self, RegularizerConfig, TikhonovSolver};
use crate::metrics::{self, ACTIVITY_THRESHOLD};
use crate::model::Seq2Seq;
use crate::tensor::Tensor;

/// A reconstruction strategy under evaluation.
pub enum Reconstructor<'a> {
    /// Trained network: decode the latent mean of the encoded measurement.
    Model {
        /// The architecture.
        model: &'a Seq2Seq,
        /// Trained flat parameter vector.
        theta: &'a [f64],
    },
    /// Frame-by-frame Tikhonov regularization.
    Tikhonov {
        /// Forward model being inverted.
        transfer: &'a TransferMatrix,
        /// Regularization strength.
        config: RegularizerConfig,
    },
    /// Greensite temporal whitening with per-column Tikhonov.
    Greensite {
        /// Forward model being inverted.
        transfer: &'a TransferMatrix,
        /// Regularization strength and energy threshold.
        config: RegularizerConfig,
    },
}

impl Reconstructor<'_> {
    /// Identifier used in the `model` column of metric rows.
    pub fn id(&self) -> &'static str {
        match self {
            Reconstructor::Model { model, .. } => model.config().variant.name(),
            Reconstructor::Tikhonov { .. } => "tikhonov",
            Reconstructor::Greensite { .. } => "greensite",
        }
    }

    /// Reconstructs one `M×T` measurement into a `U×T` potential sequence.
    pub fn reconstruct(&self, ecg: &Tensor) -> Result<Tensor> {
        match self {
            Reconstructor::Model { model, theta } => {
                let latent = model.encode(theta, ecg)?;
                Ok(model.decode(theta, &latent.mean)?.mean)
            }
            Reconstructor::Tikhonov { transfer, config } => {
                config.validate()?;
                let solver = TikhonovSolver::new(transfer.h())?;
                solver.solve_frames(ecg, config.lambda_rel * solver.sigma_max())
            }
            Reconstructor::Greensite { transfer, config } => {
                inverse::greensite(transfer.h(), ecg, config)
            }
        }
    }
}

/// Reconstruction quality of one sample; `NaN` marks undefined metrics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleMetrics {
    /// Reconstructor identifier.
    pub model: String,
    /// Split the sample came from.
    pub split: String,
    /// Training seed of the evaluated checkpoint (0 for baselines).
    pub seed: u64,
    /// Index within the split.
    pub sample: usize,
    /// Mean squared error over all `U·T` entries.
    pub mse: f64,
    /// Pearson correlation of the flattened sequences.
    pub tmp_corr: f64,
    /// Pearson correlation of activation times outside the true scar.
    pub at_corr: f64,
    /// Dice overlap of detected vs true scar.
    pub dice: f64,
}

/// Computes the four metrics for one reconstruction against its sample.
pub fn sample_metrics(
    model: &str,
    seed: u64,
    sample: &LoadedSample,
    x_hat: &Tensor,
) -> Result<SampleMetrics> {
    let truth = &sample.tmp;
    let mse = metrics::mse_seq(x_hat, truth)?;
    let tmp_corr = metrics::corr_seq(x_hat, truth)?.unwrap_or(f64::NAN);
    let at_corr =
        metrics::at_corr(x_hat, truth, &sample.record.scar_nodes)?.unwrap_or(f64::NAN);
    let detected = metrics::detect_scar(x_hat, ACTIVITY_THRESHOLD)?;
    let dice = metrics::dice(&detected, &sample.record.scar_nodes);
    Ok(SampleMetrics {
        model: model.to_string(),
        split: sample.record.split.clone(),
        seed,
        sample: sample.record.index,
        mse,
        tmp_corr,
        at_corr,
        dice,
    })
}

/// Evaluates a reconstructor over every sample of the given splits, in
/// split order.
pub fn evaluate_splits(
    recon: &Reconstructor,
    dataset: &crate::dataset::LoadedDataset,
    splits: &[&str],
    seed: u64,
) -> Result<Vec<SampleMetrics>> {
    let id = recon.id();
    let mut rows = Vec::new();
    for split in splits {
        for sample in dataset.split(split)? {
            let x_hat = recon.reconstruct(&sample.ecg)?;
            rows.push(sample_metrics(id, seed, sample, &x_hat)?);
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation of one metric's defined entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    /// Mean over defined entries; `NaN` when none are defined.
    pub mean: f64,
    /// Sample standard deviation (0 when fewer than 2 defined entries).
    pub std: f64,
    /// Number of defined (non-`NaN`) entries.
    pub defined: usize,
}

impl MetricSummary {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let defined: Vec<f64> = values.filter(|v| !v.is_nan()).collect();
        let n = defined.len();
        if n == 0 {
            return MetricSummary { mean: f64::NAN, std: 0.0, defined: 0 };
        }
        let mean = defined.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = defined.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        MetricSummary { mean, std, defined: n }
    }
}

/// Per-(model, split, seed) aggregation of [`SampleMetrics`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    /// Reconstructor identifier.
    pub model: String,
    /// Split name.
    pub split: String,
    /// Training seed.
    pub seed: u64,
    /// Samples in the group.
    pub samples: usize,
    /// MSE summary.
    pub mse: MetricSummary,
    /// TMP correlation summary.
    pub tmp_corr: MetricSummary,
    /// Activation-time correlation summary.
    pub at_corr: MetricSummary,
    /// Dice summary.
    pub dice: MetricSummary,
}

/// Groups rows by (model, split, seed), preserving first-appearance order,
/// and summarizes each metric over the group's defined entries.
pub fn summarize(rows: &[SampleMetrics]) -> Vec<SplitSummary> {
    let mut order: Vec<(String, String, u64)> = Vec::new();
    for row in rows {
        let key = (row.model.clone(), row.split.clone(), row.seed);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(model, split, seed)| {
            let group: Vec<&SampleMetrics> = rows
                .iter()
                .filter(|r| r.model == model && r.split == split && r.seed == seed)
                .collect();
            SplitSummary {
                samples: group.len(),
                mse: MetricSummary::of(group.iter().map(|r| r.mse)),
                tmp_corr: MetricSummary::of(group.iter().map(|r| r.tmp_corr)),
                at_corr: MetricSummary::of(group.iter().map(|r| r.at_corr)),
                dice: MetricSummary::of(group.iter().map(|r| r.dice)),
                model,
                split,
                seed,
            }
        })
        .collect()
}

/// Writes per-sample metric rows as CSV with header
/// `model,split,seed,sample,mse,tmp_corr,at_corr,dice`.
pub fn write_metrics_csv(path: &Path, rows: &[SampleMetrics]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|err| Error::format(path.display(), err))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads rows written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<SampleMetrics>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|err| Error::format(path.display(), err)))
        .collect()
}

/// Writes grouped summaries as CSV, one row per (model, split, seed), with
/// mean/std/defined columns per metric.
pub fn write_summary_csv(path: &Path, summaries: &[SplitSummary]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    let fail = |err: csv::Error| Error::format(path.display(), err);
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
        let mut record = vec![s.model.clone(), s.split.clone(), s.seed.to_string(), s.samples.to_string()];
        for m in [&s.mse, &s.tmp_corr, &s.at_corr, &s.dice] {
            record.push(m.mean.to_string());
            record.push(m.std.to_string());
            record.push(m.defined.to_string());
        }
        writer.write_record(&record).map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

/// Quarter-arc bucket of a node on an `n`-ring: `node·4/n` in `{0,1,2,3}`.
pub fn quarter_label(node: usize, n: usize) -> usize {
    node * 4 / n
}

/// Quarter-arc bucket of a scar set's midpoint on an `n`-ring.
///
/// The set is read as an arc by cutting the ring at its largest gap; the
/// bucket is the quarter containing the arc's middle node. Rejects empty
/// sets.
pub fn scar_arc_label(scar: &BTreeSet<usize>, n: usize) -> Result<usize> {
    let nodes: Vec<usize> = scar.iter().copied().collect();
    if nodes.is_empty() {
        return Err(Error::invalid("cannot label an empty scar set"));
    }
    if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
        return Err(Error::invalid(format!("scar node {bad} out of range for {n} nodes")));
    }
    // Find the largest circular gap; the arc starts just after it.
    let mut start = nodes[0];
    let mut largest = nodes[0] + n - nodes[nodes.len() - 1];
    for pair in nodes.windows(2) {
        let gap = pair[1] - pair[0];
        if gap > largest {
            largest = gap;
            start = pair[1];
        }
    }
    let midpoint = (start + (nodes.len() - 1) / 2) % n;
    Ok(quarter_label(midpoint, n))
}

/// Latent-space diagnostics over a pool of samples.
#[derive(Debug, Clone)]
pub struct LatentAnalysis {
    /// `split/index` identifier per row, aligned with the projection.
    pub sample_ids: Vec<String>,
    /// 2-D PCA of the encoder means.
    pub projection: Projection2d,
    /// Quarter-arc bucket of each excitation origin.
    pub exc_labels: Vec<usize>,
    /// Quarter-arc bucket of each scar midpoint.
    pub scar_labels: Vec<usize>,
    /// Silhouette of the excitation labels in full latent dimension.
    pub exc_silhouette: f64,
    /// Silhouette of the scar labels in full latent dimension.
    pub scar_silhouette: f64,
}

/// Encodes every sample, projects the latent means to 2-D, and scores both
/// label families with full-dimensional silhouettes.
///
/// # Errors
///
/// Propagates encoder failures and the silhouette's requirement of at least
/// two distinct labels per family.
pub fn analyze_latents(
    model: &Seq2Seq,
    theta: &[f64],
    samples: &[&LoadedSample],
) -> Result<LatentAnalysis> {
    if samples.len() < 2 {
        return Err(Error::invalid("latent analysis needs at least 2 samples"));
    }
    let n = model.config().output_dim;
    let d = model.config().latent_len();
    let mut latents = Tensor::zeros(&[samples.len(), d]);
    let mut sample_ids = Vec::with_capacity(samples.len());
    let mut exc_labels = Vec::with_capacity(samples.len());
    let mut scar_labels = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let latent = model.encode(theta, &sample.ecg)?;
        latents.row_mut(i).copy_from_slice(&latent.mean);
        sample_ids.push(format!("{}/{}", sample.record.split, sample.record.index));
        exc_labels.push(quarter_label(sample.record.excitation_node, n));
        scar_labels.push(scar_arc_label(&sample.record.scar_nodes, n)?);
    }
    let projection = cluster::project_2d(&latents)?;
    let exc_silhouette = cluster::silhouette(&latents, &exc_labels)?;
    let scar_silhouette = cluster::silhouette(&latents, &scar_labels)?;
    Ok(LatentAnalysis {
        sample_ids,
        projection,
        exc_labels,
        scar_labels,
        exc_silhouette,
        scar_silhouette,
    })
}

/// Writes projected latent coordinates as CSV with header
/// `sample_id,pc1,pc2,exc_label,scar_label`.
pub fn write_projection_csv(path: &Path, analysis: &LatentAnalysis) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    let fail = |err: csv::Error| Error::format(path.display(), err);
    writer
        .write_record(["sample_id", "pc1", "pc2", "exc_label", "scar_label"])
        .map_err(fail)?;
    for (i, id) in analysis.sample_ids.iter().enumerate() {
        let [pc1, pc2] = analysis.projection.coords[i];
        writer
            .write_record([
                id.clone(),
                pc1.to_string(),
                pc2.to_string(),
                analysis.exc_labels[i].to_string(),
                analysis.scar_labels[i].to_string(),
            ])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        self, DatasetConfig, GeometryConfig, LoadedDataset, SplitCounts, TransferConfig,
        TRAIN_SPLIT,
    };
    use crate::model::{ModelConfig, ModelVariant};
    use crate::scenario::SplitSpec;

    fn tiny_dataset(dir: &Path) -> (DatasetConfig, LoadedDataset) {
        let config = DatasetConfig {
            frames: 24,
            snr_db: f64::INFINITY,
            geometry: GeometryConfig { nodes: 16, neighbors: 1 },
            transfer: TransferConfig { electrodes: 8, ..TransferConfig::default() },
            split: SplitSpec {
                exc_train_start: 0,
                exc_train_len: 6,
                scar_train_start: 8,
                scar_train_len: 4,
                scar_min_size: 2,
                scar_max_size: 3,
            },
            counts: SplitCounts { train: 6, validation: 2, test_per_band: 2 },
            ..DatasetConfig::default()
        };
        dataset::generate_dataset(&config, 31, dir).unwrap();
        let loaded = dataset::load_dataset(dir).unwrap();
        (config, loaded)
    }

    fn tiny_model() -> (Seq2Seq, Vec<f64>) {
        let config = ModelConfig {
            variant: ModelVariant::SvsStochastic,
            input_dim: 8,
            output_dim: 16,
            seq_len: 24,
            encoder_hidden: [6, 4],
            latent_dim: 3,
            mc_samples: 1,
        };
        let model = Seq2Seq::new(config).unwrap();
        let theta = model.init_params(77);
        (model, theta)
    }

    #[test]
    fn perfect_reconstruction_scores_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let (_, data) = tiny_dataset(dir.path());
        for sample in data.train().unwrap() {
            let row = sample_metrics("oracle", 0, sample, &sample.tmp.clone()).unwrap();
            assert_eq!(row.mse, 0.0);
            assert!((row.tmp_corr - 1.0).abs() < 1e-12, "tmp_corr {}", row.tmp_corr);
            assert!((row.at_corr - 1.0).abs() < 1e-12, "at_corr {}", row.at_corr);
            assert_eq!(row.dice, 1.0);
        }
    }

    #[test]
    fn tikhonov_baseline_produces_sane_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (config, data) = tiny_dataset(dir.path());
        let graph = config.geometry.build().unwrap();
        let transfer = config.transfer.build(&graph).unwrap();
        let recon = Reconstructor::Tikhonov {
            transfer: &transfer,
            config: RegularizerConfig::default(),
        };
        let rows = evaluate_splits(&recon, &data, &[TRAIN_SPLIT], 0).unwrap();
        assert_eq!(rows.len(), 6);
        for row in &rows {
            assert_eq!(row.model, "tikhonov");
            assert_eq!(row.split, TRAIN_SPLIT);
            assert!(row.mse.is_finite() && row.mse >= 0.0);
            assert!(row.tmp_corr.is_nan() || row.tmp_corr.abs() <= 1.0 + 1e-12);
            assert!((0.0..=1.0).contains(&row.dice));
        }
        // Noiseless Tikhonov on a mild problem correlates positively with truth.
        let summary = &summarize(&rows)[0];
        assert!(summary.tmp_corr.defined >= 5, "defined {}", summary.tmp_corr.defined);
        assert!(summary.tmp_corr.mean > 0.3, "mean corr {}", summary.tmp_corr.mean);
    }

    #[test]
    fn untrained_model_reconstructor_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let (_, data) = tiny_dataset(dir.path());
        let (model, theta) = tiny_model();
        let recon = Reconstructor::Model { model: &model, theta: &theta };
        assert_eq!(recon.id(), "svs-stochastic");
        let splits = ["test_scar_low_exc_low", "test_scar_low_exc_high"];
        let rows = evaluate_splits(&recon, &data, &splits, 4).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.seed == 4));
        assert_eq!(rows[0].split, splits[0]);
        assert_eq!(rows[3].split, splits[1]);
    }

    #[test]
    fn summaries_skip_undefined_entries() {
        let row = |split: &str, sample: usize, mse: f64, tmp: f64| SampleMetrics {
            model: "m".into(),
            split: split.into(),
            seed: 1,
            sample,
            mse,
            tmp_corr: tmp,
            at_corr: f64::NAN,
            dice: 1.0,
        };
        let rows = vec![
            row("a", 0, 1.0, 0.5),
            row("a", 1, 3.0, f64::NAN),
            row("b", 0, 2.0, 0.25),
        ];
        let summaries = summarize(&rows);
        assert_eq!(summaries.len(), 2);
        let a = &summaries[0];
        assert_eq!((a.model.as_str(), a.split.as_str(), a.samples), ("m", "a", 2));
        assert_eq!(a.mse.mean, 2.0);
        assert!((a.mse.std - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(a.tmp_corr.defined, 1);
        assert_eq!(a.tmp_corr.mean, 0.5);
        assert_eq!(a.tmp_corr.std, 0.0);
        assert_eq!(a.at_corr.defined, 0);
        assert!(a.at_corr.mean.is_nan());
        assert_eq!(a.dice.mean, 1.0);
    }

    #[test]
    fn metrics_csv_roundtrips_nan_markers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![SampleMetrics {
            model: "m".into(),
            split: "train".into(),
            seed: 7,
            sample: 0,
            mse: 0.5,
            tmp_corr: f64::NAN,
            at_corr: 0.75,
            dice: 1.0,
        }];
        write_metrics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("model,split,seed,sample,mse,tmp_corr,at_corr,dice\n"),
            "got {text:?}"
        );
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].tmp_corr.is_nan());
        assert_eq!(back[0].at_corr, 0.75);
    }

    #[test]
    fn quarter_labels_bucket_the_ring() {
        assert_eq!(quarter_label(0, 64), 0);
        assert_eq!(quarter_label(15, 64), 0);
        assert_eq!(quarter_label(16, 64), 1);
        assert_eq!(quarter_label(63, 64), 3);
    }

    #[test]
    fn scar_labels_use_the_arc_midpoint() {
        let arc: BTreeSet<usize> = [4, 5, 6].into_iter().collect();
        assert_eq!(scar_arc_label(&arc, 16).unwrap(), 1);
        // Wrapping arc 14,15,0,1 is cut at its largest gap, midpoint 15.
        let wrapped: BTreeSet<usize> = [14, 15, 0, 1].into_iter().collect();
        assert_eq!(scar_arc_label(&wrapped, 16).unwrap(), 3);
        assert!(scar_arc_label(&BTreeSet::new(), 16).is_err());
        let out_of_range: BTreeSet<usize> = [20].into_iter().collect();
        assert!(scar_arc_label(&out_of_range, 16).is_err());
    }

    #[test]
    fn latent_analysis_exports_aligned_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (_, data) = tiny_dataset(dir.path());
        let (model, theta) = tiny_model();
        let pool: Vec<&LoadedSample> = dataset::split_names()
            .iter()
            .flat_map(|s| data.split(s).unwrap())
            .collect();
        let analysis = analyze_latents(&model, &theta, &pool).unwrap();
        assert_eq!(analysis.sample_ids.len(), pool.len());
        assert_eq!(analysis.projection.coords.len(), pool.len());
        assert!(analysis.exc_silhouette.is_finite());
        assert!(analysis.scar_silhouette.is_finite());
        assert_eq!(analysis.sample_ids[0], "train/0");

        let path = dir.path().join("latents.csv");
        write_projection_csv(&path, &analysis).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("sample_id,pc1,pc2,exc_label,scar_label\n"),
            "got {text:?}"
        );
        assert_eq!(text.lines().count(), pool.len() + 1);
    }

    #[test]
    fn latent_analysis_rejects_single_label_families() {
        let dir = tempfile::tempdir().unwrap();
        let (_, data) = tiny_dataset(dir.path());
        let (model, theta) = tiny_model();
        // One train sample pool: every label family collapses to one value
        // or the pool is too small; either way this must error, not panic.
        let pool: Vec<&LoadedSample> = data.train().unwrap().iter().take(1).collect();
        assert!(analyze_latents(&model, &theta, &pool).is_err());
    }
}

//! Mini-batch training with early stopping on validation loss.
//!
//! The loop is fully deterministic given its seed. Randomness is split by
//! purpose so that no component's draw order can perturb another's:
//!
//! - initialization uses the model's own `Init` stream;
//! - the epoch-`e` shuffle comes from `stream(seed, Shuffle, e)`;
//! - the reparameterization noise for train sample `i` in epoch `e` comes
//!   from `derive_seed(seed, Sampling, e·n_train + i)`;
//! - validation noise for sample `i` is frozen across epochs at
//!   `derive_seed(seed, Sampling, max_epochs·n_train + i)`, so the early
//!   stopper compares epochs on identical validation draws instead of
//!   chasing noise.
//!
//! Gradients are averaged over each mini-batch, stepped with Adam, and the
//! loop keeps a snapshot of the best-validation parameters; that snapshot
//! becomes the returned checkpoint, so its validation loss is a lower bound
//! over every recorded epoch.

use rand::seq::SliceRandom;

use crate::checkpoint::ModelCheckpoint;
use crate::dataset::{LoadedDataset, RNG_ALGORITHM};
use crate::error::{Error, Result};
use crate::loss;
use crate::model::{ModelConfig, Seq2Seq};
use crate::nn::AdamState;
use crate::rng::{self, StreamKind};

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Samples per gradient step.
    pub batch_size: usize,
    /// Hard epoch cap.
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Weight of the KL term in the objective.
    pub lambda: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            batch_size: 16,
            max_epochs: 400,
            patience: 30,
            learning_rate: 1e-3,
            lambda: 1.0,
        }
    }
}

impl HyperParams {
    /// Checks ranges.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("batch_size, max_epochs, and patience must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be nonnegative and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-epoch losses; train entries are means over the epoch's samples at the
/// parameters they were visited with.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Mean training objective.
    pub train_total: f64,
    /// Mean training reconstruction NLL.
    pub train_recon: f64,
    /// Mean training KL.
    pub train_kl: f64,
    /// Mean validation objective under frozen validation noise.
    pub val_total: f64,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot at the best validation epoch.
    pub checkpoint: ModelCheckpoint,
    /// One entry per completed epoch.
    pub curve: Vec<EpochStats>,
    /// Epoch index of the checkpoint.
    pub best_epoch: usize,
    /// Whether patience ran out before `max_epochs`.
    pub stopped_early: bool,
}

/// Trains a fresh model on the dataset's train split.
pub fn train(
    config: &ModelConfig,
    dataset: &LoadedDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with(config, dataset, hyper, seed, |_| {})
}

/// [`train`] with an observer called after every epoch; long runs use it for
/// progress output.
pub fn train_with(
    config: &ModelConfig,
    dataset: &LoadedDataset,
    hyper: &HyperParams,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    hyper.validate()?;
    check_compatible(config, dataset)?;
    let model = Seq2Seq::new(config.clone())?;
    let train_set = dataset.train()?;
    let val_set = dataset.validation()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    let n_train = train_set.len();

    let mut theta = model.init_params(seed);
    let mut adam = AdamState::new(theta.len(), hyper.learning_rate);
    let mut grad = vec![0.0; theta.len()];

    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>, AdamState)> = None;
    let mut epochs_since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..hyper.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng::stream(seed, StreamKind::Shuffle, epoch as u64));

        let mut sums = (0.0, 0.0, 0.0);
        for batch in order.chunks(hyper.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let sample = &train_set[i];
                let noise_seed =
                    rng::derive_seed(seed, StreamKind::Sampling, (epoch * n_train + i) as u64);
                let pass = model.forward(&theta, &sample.ecg, noise_seed)?;
                let (breakdown, grads) =
                    loss::loss_gradients(&sample.tmp, &pass, hyper.lambda).map_err(|err| {
                        Error::numerical(format!(
                            "diverged at epoch {epoch}, train sample {i}: {err}"
                        ))
                    })?;
                model.backward(&theta, &pass, &grads, &mut grad)?;
                sums.0 += breakdown.total;
                sums.1 += breakdown.recon_nll;
                sums.2 += breakdown.kl;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.update(&mut theta, &grad)?;
        }

        let mut val_sum = 0.0;
        for (i, sample) in val_set.iter().enumerate() {
            let noise_seed = rng::derive_seed(
                seed,
                StreamKind::Sampling,
                (hyper.max_epochs * n_train + i) as u64,
            );
            let pass = model.forward(&theta, &sample.ecg, noise_seed)?;
            let breakdown = loss::total_loss(&sample.tmp, &pass, hyper.lambda).map_err(|err| {
                Error::numerical(format!("diverged at epoch {epoch}, val sample {i}: {err}"))
            })?;
            val_sum += breakdown.total;
        }

        let stats = EpochStats {
            epoch,
            train_total: sums.0 / n_train as f64,
            train_recon: sums.1 / n_train as f64,
            train_kl: sums.2 / n_train as f64,
            val_total: val_sum / val_set.len() as f64,
        };
        curve.push(stats);
        on_epoch(&stats);

        let improved = best.as_ref().is_none_or(|(best_val, ..)| stats.val_total < *best_val);
        if improved {
            best = Some((stats.val_total, epoch, theta.clone(), adam.clone()));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= hyper.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_val, best_epoch, best_theta, best_adam) =
        best.expect("at least one epoch ran, so a best snapshot exists");
    let checkpoint = ModelCheckpoint {
        config: config.clone(),
        params: best_theta,
        adam: best_adam,
        epoch: best_epoch as u64,
        best_val_loss: best_val,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        master_seed: seed,
    };
    Ok(TrainOutcome { checkpoint, curve, best_epoch, stopped_early })
}

/// Rejects model configs whose dimensions do not match the dataset.
fn check_compatible(config: &ModelConfig, dataset: &LoadedDataset) -> Result<()> {
    let dc = &dataset.manifest.config;
    if config.input_dim != dc.transfer.electrodes
        || config.output_dim != dc.geometry.nodes
        || config.seq_len != dc.frames
    {
        return Err(Error::shape(format!(
            "model expects {}×{} measurements over {} nodes; dataset provides {}×{} over {}",
            config.input_dim,
            config.seq_len,
            config.output_dim,
            dc.transfer.electrodes,
            dc.frames,
            dc.geometry.nodes,
        )));
    }
    Ok(())
}

/// Writes a loss curve as CSV with header
/// `epoch,train_total,train_recon,train_kl,val_total`.
pub fn write_loss_curve(path: &std::path::Path, curve: &[EpochStats]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    for stats in curve {
        writer
            .serialize(stats)
            .map_err(|err| Error::format(path.display(), err))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a loss curve written by [`write_loss_curve`].
pub fn read_loss_curve(path: &std::path::Path) -> Result<Vec<EpochStats>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|err| Error::format(path.display(), err))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|err| Error::format(path.display(), err)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::{load_checkpoint, save_checkpoint};
    use crate::container;
    use crate::dataset::{
        self, DatasetConfig, GeometryConfig, SplitCounts, TransferConfig,
    };
    use crate::model::ModelVariant;
    use crate::scenario::SplitSpec;
    use crate::tensor::Tensor;

    /// 16-node ring, 4 electrodes, 12 frames; 8 train / 4 val samples.
    fn tiny_dataset(dir: &std::path::Path, seed: u64) -> LoadedDataset {
        let config = DatasetConfig {
            frames: 12,
            geometry: GeometryConfig { nodes: 16, neighbors: 1 },
            transfer: TransferConfig { electrodes: 4, ..TransferConfig::default() },
            split: SplitSpec {
                exc_train_start: 0,
                exc_train_len: 6,
                scar_train_start: 8,
                scar_train_len: 4,
                scar_min_size: 2,
                scar_max_size: 3,
            },
            counts: SplitCounts { train: 8, validation: 4, test_per_band: 1 },
            ..DatasetConfig::default()
        };
        dataset::generate_dataset(&config, seed, dir).unwrap();
        dataset::load_dataset(dir).unwrap()
    }

    fn tiny_model(variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim: 4,
            output_dim: 16,
            seq_len: 12,
            encoder_hidden: [6, 4],
            latent_dim: 3,
            mc_samples: 1,
        }
    }

    #[test]
    fn one_epoch_produces_one_entry_and_a_reloadable_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(&dir.path().join("data"), 5);
        let hyper = HyperParams { batch_size: 4, max_epochs: 1, ..HyperParams::default() };
        let out = train(&tiny_model(ModelVariant::SvsStochastic), &data, &hyper, 1).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.best_epoch, 0);
        assert!(!out.stopped_early);

        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &out.checkpoint).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), out.checkpoint);
    }

    #[test]
    fn same_seed_gives_identical_curves_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(&dir.path().join("data"), 5);
        let hyper = HyperParams { batch_size: 4, max_epochs: 3, ..HyperParams::default() };
        let config = tiny_model(ModelVariant::SvsStochastic);
        let a = train(&config, &data, &hyper, 9).unwrap();
        let b = train(&config, &data, &hyper, 9).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.checkpoint, b.checkpoint);
        let c = train(&config, &data, &hyper, 10).unwrap();
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn loss_decreases_on_a_tiny_problem() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(&dir.path().join("data"), 5);
        let hyper = HyperParams { batch_size: 4, max_epochs: 40, ..HyperParams::default() };
        let out = train(&tiny_model(ModelVariant::SvsDeterministic), &data, &hyper, 2).unwrap();
        let first = out.curve.first().unwrap().train_total;
        let last = out.curve.last().unwrap().train_total;
        assert!(
            last < 0.5 * first,
            "train loss went {first} -> {last}, expected at least a halving"
        );
    }

    #[test]
    fn checkpoint_is_best_over_recorded_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(&dir.path().join("data"), 5);
        let hyper = HyperParams {
            batch_size: 4,
            max_epochs: 12,
            patience: 3,
            ..HyperParams::default()
        };
        let out = train(&tiny_model(ModelVariant::SvsStochastic), &data, &hyper, 3).unwrap();
        let best = out
            .curve
            .iter()
            .map(|s| s.val_total)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.checkpoint.best_val_loss, best);
        assert_eq!(out.checkpoint.best_val_loss, out.curve[out.best_epoch].val_total);
        assert_eq!(out.checkpoint.epoch, out.best_epoch as u64);
        if out.stopped_early {
            assert!(out.curve.len() < hyper.max_epochs);
        }
    }

    #[test]
    fn poisoned_sample_aborts_with_epoch_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let data = tiny_dataset(&data_dir, 5);
        // Plant an absurd target: (x - g)^2 overflows, so the loss is
        // non-finite and training must abort with a structured error.
        let victim = &data.train().unwrap()[0].record.tmp;
        let huge = Tensor::filled(&[16, 12], 1e300);
        container::write_matrix(&data_dir.join(victim), &huge).unwrap();
        let data = dataset::load_dataset(&data_dir).unwrap();

        let hyper = HyperParams { batch_size: 4, max_epochs: 2, ..HyperParams::default() };
        let err = train(&tiny_model(ModelVariant::SvsStochastic), &data, &hyper, 3).unwrap_err();
        assert!(err.to_string().contains("epoch 0"), "got {err}");
    }

    #[test]
    fn rejects_mismatched_model_and_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(&dir.path().join("data"), 5);
        let mut config = tiny_model(ModelVariant::SvsStochastic);
        config.input_dim = 5;
        let err = train(&config, &data, &HyperParams::default(), 1).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "got {err:?}");
    }

    #[test]
    fn loss_curve_csv_roundtrips_with_declared_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let curve = vec![
            EpochStats {
                epoch: 0,
                train_total: 1.5,
                train_recon: 1.25,
                train_kl: 0.25,
                val_total: 1.75,
            },
            EpochStats {
                epoch: 1,
                train_total: 1.25,
                train_recon: 1.0,
                train_kl: 0.25,
                val_total: 1.5,
            },
        ];
        write_loss_curve(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("epoch,train_total,train_recon,train_kl,val_total\n"),
            "got {text:?}"
        );
        assert_eq!(read_loss_curve(&path).unwrap(), curve);
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let bad = HyperParams { batch_size: 0, ..HyperParams::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { learning_rate: -1.0, ..HyperParams::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { lambda: f64::NAN, ..HyperParams::default() };
        assert!(bad.validate().is_err());
    }
}

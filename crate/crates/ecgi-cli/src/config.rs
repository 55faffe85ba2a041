//! The run configuration document.
//!
//! One TOML file describes an entire experiment: the dataset (geometry,
//! kinetics, transfer model, noise, splits, counts), the model shape, the
//! optimizer, the baseline regularizer, which variants to train, and the
//! seeds. Every subcommand accepts `--config`; omitting it uses the
//! defaults, which reproduce the desk-scale experiment. Unknown keys are
//! rejected at every level so a typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use ecgi::dataset::DatasetConfig;
use ecgi::inverse::RegularizerConfig;
use ecgi::model::ModelVariant;
use ecgi::train::HyperParams;

use crate::app::{usage, Result};

/// The five variant names accepted on the command line and in config files.
pub const VARIANT_NAMES: [&str; 5] = [
    "svs-stochastic",
    "svs-deterministic",
    "svs-l-stochastic",
    "svs-l-deterministic",
    "sss-stochastic",
];

/// Network sizes shared by every variant; the data-dependent dimensions
/// (channels, nodes, frames) come from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    /// Encoder LSTM widths `[h1, h2]`; the decoder mirrors them.
    pub encoder_hidden: [usize; 2],
    /// Latent width `d` (per timestep for `sss`).
    pub latent_dim: usize,
    /// Reparameterization draws averaged per training forward pass.
    pub mc_samples: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            encoder_hidden: [12, 8],
            latent_dim: 16,
            mc_samples: 1,
        }
    }
}

/// Everything one experiment needs besides the command line's paths.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Variants to train, in run order.
    pub variants: Vec<ModelVariant>,
    /// Training seeds; each (variant, seed) pair is one run.
    pub seeds: Vec<u64>,
    /// Seed for dataset generation.
    pub dataset_seed: u64,
    /// Default output directory for `repro` when `--out` is not given.
    pub out_dir: PathBuf,
    /// Dataset generation parameters.
    pub dataset: DatasetConfig,
    /// Network sizes.
    pub model: ModelShape,
    /// Optimizer and objective weights.
    pub train: HyperParams,
    /// Classical-baseline regularization.
    pub regularizer: RegularizerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variants: ModelVariant::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            dataset_seed: 1,
            out_dir: PathBuf::from("ecgi-out"),
            dataset: DatasetConfig::default(),
            model: ModelShape::default(),
            train: HyperParams::default(),
            regularizer: RegularizerConfig::default(),
        }
    }
}

impl RunConfig {
    /// Cross-checks every section.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.regularizer.validate().map_err(usage)?;
        if self.variants.is_empty() {
            return Err(usage("config lists no variants"));
        }
        if self.seeds.is_empty() {
            return Err(usage("config lists no seeds"));
        }
        for (i, seed) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(seed) {
                return Err(usage(format!("duplicate seed {seed} in config")));
            }
        }
        for (i, variant) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(variant) {
                return Err(usage(format!("duplicate variant {} in config", variant.name())));
            }
        }
        Ok(())
    }
}

/// Loads and validates a run config; `None` means defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let config = match path {
        None => RunConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|err| usage(format!("{}: {err}", path.display())))?;
            toml::from_str(&text).map_err(|err| usage(format!("{}: {err}", path.display())))?
        }
    };
    config.validate()?;
    Ok(config)
}

/// Resolves a variant name from the command line, listing the valid names
/// on failure.
pub fn parse_variant(name: &str) -> Result<ModelVariant> {
    match name {
        "svs-stochastic" => Ok(ModelVariant::SvsStochastic),
        "svs-deterministic" => Ok(ModelVariant::SvsDeterministic),
        "svs-l-stochastic" => Ok(ModelVariant::SvsLStochastic),
        "svs-l-deterministic" => Ok(ModelVariant::SvsLDeterministic),
        "sss-stochastic" => Ok(ModelVariant::SssStochastic),
        other => Err(usage(format!(
            "unknown variant {other:?}; valid variants: {}",
            VARIANT_NAMES.join(", ")
        ))),
    }
}

//! Dataset generation and loading: simulate → project → noise → persist.
//!
//! A dataset directory holds one subdirectory per split — `train`, `val`,
//! and the four held-out test bands named `test_scar_{low,high}_exc_{low,high}`
//! — each containing per-sample TMP and ECG matrices in the
//! [container](crate::container) format, plus a `manifest.toml` documenting
//! every sample's generative scenario, the full generation config, and the
//! RNG contract. Generation is deterministic: the (config, seed) pair fixes
//! every byte in the directory.
//!
//! Seeds are derived per purpose so that no draw order couples unrelated
//! parts of the pipeline: split `s` draws its scenarios from
//! `derive_seed(seed, Scenario, s)` and the sample with global index `g`
//! draws its measurement noise from `derive_seed(seed, Noise, g)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cardiac::{self, ApParams};
use crate::container;
use crate::error::{Error, Result};
use crate::forward::{self, TransferMatrix};
use crate::graph::HeartGraph;
use crate::rng::{self, StreamKind};
use crate::scenario::{self, Difficulty, DrawRegion, SplitSpec};
use crate::tensor::Tensor;

/// Manifest format identifier written by this crate.
pub const MANIFEST_FORMAT: &str = "ecgi-dataset-v1";

/// RNG contract identifier recorded in every manifest.
pub const RNG_ALGORITHM: &str = "chacha12-stream-v1";

/// Manifest file name inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Name of the training split.
pub const TRAIN_SPLIT: &str = "train";

/// Name of the validation split.
pub const VAL_SPLIT: &str = "val";

/// Ring geometry parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Number of heart nodes `U`.
    pub nodes: usize,
    /// Ring coupling half-width (neighbors per side).
    pub neighbors: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            nodes: 64,
            neighbors: 1,
        }
    }
}

impl GeometryConfig {
    /// Builds the heart graph described by this config.
    pub fn build(&self) -> Result<HeartGraph> {
        HeartGraph::build_ring(self.nodes, self.neighbors)
    }
}

/// Body-surface transfer model parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Number of electrodes `M`.
    pub electrodes: usize,
    /// Radius of the electrode circle, in the same units as the heart ring.
    pub torso_radius: f64,
    /// Distance-softening constant of the lead-field kernel.
    pub eps: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            electrodes: 16,
            torso_radius: 3.0,
            eps: 0.1,
        }
    }
}

impl TransferConfig {
    /// Builds the transfer matrix for `graph`.
    pub fn build(&self, graph: &HeartGraph) -> Result<TransferMatrix> {
        forward::build_transfer(graph, self.electrodes, self.torso_radius, self.eps)
    }
}

/// Sample counts per split kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    /// Training samples.
    pub train: usize,
    /// Validation samples (drawn from the training regions).
    pub validation: usize,
    /// Samples in each of the four held-out test bands.
    pub test_per_band: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: 300,
            validation: 60,
            test_per_band: 50,
        }
    }
}

/// Everything that determines a dataset, apart from the seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Frames per recorded sequence.
    pub frames: usize,
    /// Measurement SNR in dB; `+inf` disables noise.
    pub snr_db: f64,
    /// Heart geometry.
    pub geometry: GeometryConfig,
    /// Aliev-Panfilov kinetics and integrator parameters.
    pub ap: ApParams,
    /// Lead-field model.
    pub transfer: TransferConfig,
    /// Train/held-out partition of scenario parameters.
    pub split: SplitSpec,
    /// Samples per split.
    pub counts: SplitCounts,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            frames: 60,
            snr_db: 40.0,
            geometry: GeometryConfig::default(),
            ap: ApParams::default(),
            transfer: TransferConfig::default(),
            split: SplitSpec::default(),
            counts: SplitCounts::default(),
        }
    }
}

impl DatasetConfig {
    /// Validates the config as a whole, including the integrator stability
    /// bound on the configured geometry and the feasibility of the split
    /// regions.
    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    /// Builds and cross-checks the graph and transfer model.
    fn prepare(&self) -> Result<(HeartGraph, TransferMatrix)> {
        if self.frames < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 frames, got {}",
                self.frames
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("snr_db must be finite or +inf, got {}", self.snr_db)));
        }
        let graph = self.geometry.build()?;
        self.ap.validate_for(&graph)?;
        self.split.validate(graph.node_count())?;
        let transfer = self.transfer.build(&graph)?;
        Ok((graph, transfer))
    }

    /// Hex-encoded SHA-256 of the canonical TOML serialization of this
    /// config; recorded in the manifest and re-checked on load.
    pub fn sha256_hex(&self) -> Result<String> {
        let text = toml::to_string(self)
            .map_err(|err| Error::invalid(format!("config serialization failed: {err}")))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

/// The four held-out bands in manifest order: scar difficulty varies
/// slowest, so the order is (low, low), (low, high), (high, low), (high, high).
pub fn test_bands() -> [(Difficulty, Difficulty); 4] {
    [
        (Difficulty::Low, Difficulty::Low),
        (Difficulty::Low, Difficulty::High),
        (Difficulty::High, Difficulty::Low),
        (Difficulty::High, Difficulty::High),
    ]
}

/// Directory name of the test split for one (scar, excitation) band.
pub fn test_split_name(scar: Difficulty, exc: Difficulty) -> String {
    format!("test_scar_{scar}_exc_{exc}")
}

/// All split names in generation order.
pub fn split_names() -> Vec<String> {
    let mut names = vec![TRAIN_SPLIT.to_string(), VAL_SPLIT.to_string()];
    names.extend(test_bands().iter().map(|&(s, e)| test_split_name(s, e)));
    names
}

/// One sample's provenance, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// Split directory this sample belongs to.
    pub split: String,
    /// Index within the split.
    pub index: usize,
    /// TMP container path, relative to the dataset root.
    pub tmp: String,
    /// ECG container path, relative to the dataset root.
    pub ecg: String,
    /// Node where excitation started.
    pub excitation_node: usize,
    /// Scarred nodes.
    pub scar_nodes: BTreeSet<usize>,
    /// Excitation-origin difficulty band.
    pub exc_difficulty: Difficulty,
    /// Scar-center difficulty band.
    pub scar_difficulty: Difficulty,
    /// Derived seed that generated this sample's measurement noise.
    pub noise_seed: u64,
}

/// Dataset description persisted as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Manifest format identifier.
    pub format: String,
    /// RNG contract identifier.
    pub rng: String,
    /// Master seed of the generation run.
    pub seed: u64,
    /// Hex SHA-256 of the canonical config serialization.
    pub config_sha256: String,
    /// Realized sample counts per split.
    pub counts: BTreeMap<String, usize>,
    /// Full generation config.
    pub config: DatasetConfig,
    /// Per-sample provenance, in generation order.
    pub samples: Vec<SampleRecord>,
}

/// Rejects manifests where a held-out sample's scenario also appears in the
/// training split.
///
/// Validation samples are excluded: they are drawn from the training regions
/// on purpose, so coincidences there are benign.
pub fn check_scenario_disjointness(manifest: &DatasetManifest) -> Result<()> {
    let train: BTreeSet<(usize, &BTreeSet<usize>)> = manifest
        .samples
        .iter()
        .filter(|s| s.split == TRAIN_SPLIT)
        .map(|s| (s.excitation_node, &s.scar_nodes))
        .collect();
    for sample in &manifest.samples {
        if !sample.split.starts_with("test_") {
            continue;
        }
        if train.contains(&(sample.excitation_node, &sample.scar_nodes)) {
            return Err(Error::invalid(format!(
                "scenario of {}/{} (excitation {}, scar {:?}) also appears in the train split",
                sample.split, sample.index, sample.excitation_node, sample.scar_nodes
            )));
        }
    }
    Ok(())
}

/// Generates a dataset directory under `dir` and returns its manifest.
///
/// Refuses to write into a directory that already contains a manifest, so a
/// stale dataset is never silently mixed with a fresh one. The directory
/// itself is created if missing.
///
/// # Errors
///
/// Propagates config validation, simulation, and I/O failures.
pub fn generate_dataset(config: &DatasetConfig, seed: u64, dir: &Path) -> Result<DatasetManifest> {
    let (graph, transfer) = config.prepare()?;
    if dir.join(MANIFEST_FILE).exists() {
        return Err(Error::invalid(format!(
            "{} already contains a dataset; remove it or choose another directory",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir)?;

    let mut plan: Vec<(String, DrawRegion, usize)> = vec![
        (TRAIN_SPLIT.to_string(), DrawRegion::Train, config.counts.train),
        (VAL_SPLIT.to_string(), DrawRegion::Train, config.counts.validation),
    ];
    for (scar, exc) in test_bands() {
        plan.push((
            test_split_name(scar, exc),
            DrawRegion::Test { exc, scar },
            config.counts.test_per_band,
        ));
    }

    let mut samples = Vec::new();
    let mut counts = BTreeMap::new();
    let mut global_index = 0u64;
    for (split_index, (split, draw, count)) in plan.iter().enumerate() {
        let scenario_seed = rng::derive_seed(seed, StreamKind::Scenario, split_index as u64);
        let scenarios =
            scenario::sample_scenarios(&graph, *count, &config.split, *draw, scenario_seed)?;
        std::fs::create_dir_all(dir.join(split))?;
        for (index, scenario) in scenarios.iter().enumerate() {
            let tmp = cardiac::simulate_tmp(&graph, scenario, &config.ap, config.frames)?;
            let clean = forward::project(&transfer, &tmp)?;
            let noise_seed = rng::derive_seed(seed, StreamKind::Noise, global_index);
            let noisy = forward::add_noise(&clean, config.snr_db, noise_seed)?;

            let tmp_rel = format!("{split}/tmp_{index:04}.bin");
            let ecg_rel = format!("{split}/ecg_{index:04}.bin");
            container::write_matrix(&dir.join(&tmp_rel), &tmp)?;
            container::write_matrix(&dir.join(&ecg_rel), &noisy.y)?;

            samples.push(SampleRecord {
                split: split.clone(),
                index,
                tmp: tmp_rel,
                ecg: ecg_rel,
                excitation_node: scenario.excitation_node,
                scar_nodes: scenario.scar_nodes.clone(),
                exc_difficulty: scenario.exc_difficulty,
                scar_difficulty: scenario.scar_difficulty,
                noise_seed,
            });
            global_index += 1;
        }
        counts.insert(split.clone(), *count);
    }

    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        rng: RNG_ALGORITHM.to_string(),
        seed,
        config_sha256: config.sha256_hex()?,
        counts,
        config: config.clone(),
        samples,
    };
    check_scenario_disjointness(&manifest)?;
    let text = toml::to_string(&manifest)
        .map_err(|err| Error::invalid(format!("manifest serialization failed: {err}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// One sample loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    /// Provenance from the manifest.
    pub record: SampleRecord,
    /// Ground-truth TMP, `U×T`.
    pub tmp: Tensor,
    /// Observed ECG, `M×T`.
    pub ecg: Tensor,
}

/// A dataset directory loaded into memory, organized by split.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    /// The parsed manifest.
    pub manifest: DatasetManifest,
    /// Directory the dataset was loaded from.
    pub root: PathBuf,
    by_split: BTreeMap<String, Vec<LoadedSample>>,
}

impl LoadedDataset {
    /// Samples of one split.
    pub fn split(&self, name: &str) -> Result<&[LoadedSample]> {
        self.by_split
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("dataset has no split named {name:?}")))
    }

    /// The training split.
    pub fn train(&self) -> Result<&[LoadedSample]> {
        self.split(TRAIN_SPLIT)
    }

    /// The validation split.
    pub fn validation(&self) -> Result<&[LoadedSample]> {
        self.split(VAL_SPLIT)
    }

    /// Names of the splits present, in manifest order.
    pub fn split_names(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for sample in &self.manifest.samples {
            if !seen.contains(&sample.split.as_str()) {
                seen.push(sample.split.as_str());
            }
        }
        seen
    }
}

/// Loads a dataset directory, verifying the manifest hash, the held-out
/// disjointness invariant, and every referenced container's existence and
/// shape.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)?;
    let manifest: DatasetManifest = toml::from_str(&text)
        .map_err(|err| Error::format(manifest_path.display(), err))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::format(
            manifest_path.display(),
            format!("unsupported manifest format {:?}", manifest.format),
        ));
    }
    let expected_hash = manifest.config.sha256_hex()?;
    if manifest.config_sha256 != expected_hash {
        return Err(Error::format(
            manifest_path.display(),
            "config hash mismatch; manifest was edited or corrupted",
        ));
    }
    check_scenario_disjointness(&manifest)?;

    let nodes = manifest.config.geometry.nodes;
    let electrodes = manifest.config.transfer.electrodes;
    let frames = manifest.config.frames;
    let mut by_split: BTreeMap<String, Vec<LoadedSample>> = BTreeMap::new();
    for record in &manifest.samples {
        let tmp = container::read_matrix(&dir.join(&record.tmp))?;
        let ecg = container::read_matrix(&dir.join(&record.ecg))?;
        if tmp.shape() != [nodes, frames] {
            return Err(Error::shape(format!(
                "{}: TMP shape {:?}, manifest says {nodes}x{frames}",
                record.tmp,
                tmp.shape()
            )));
        }
        if ecg.shape() != [electrodes, frames] {
            return Err(Error::shape(format!(
                "{}: ECG shape {:?}, manifest says {electrodes}x{frames}",
                record.ecg,
                ecg.shape()
            )));
        }
        by_split.entry(record.split.clone()).or_default().push(LoadedSample {
            record: record.clone(),
            tmp,
            ecg,
        });
    }
    Ok(LoadedDataset {
        manifest,
        root: dir.to_path_buf(),
        by_split,
    })
}

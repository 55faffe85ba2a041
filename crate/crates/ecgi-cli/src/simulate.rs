//! `ecgi simulate`: generate a dataset directory.

use std::path::Path;

use ecgi::dataset::{self, DatasetManifest};

use crate::app::{ensure_writable, AppError, Result};
use crate::config::RunConfig;

/// Generates a dataset under `out` and prints a manifest summary.
pub fn run(config: &RunConfig, out: &Path, seed: Option<u64>, force: bool) -> Result<()> {
    ensure_writable(out, force)?;
    if force && out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    let seed = seed.unwrap_or(config.dataset_seed);
    let manifest = dataset::generate_dataset(&config.dataset, seed, out)
        .map_err(|err| AppError::Runtime(err.to_string()))?;
    print_summary(&manifest, out);
    Ok(())
}

fn print_summary(manifest: &DatasetManifest, out: &Path) {
    println!("dataset: {}", out.display());
    println!("seed: {}", manifest.seed);
    println!("rng: {}", manifest.rng);
    println!("config sha256: {}", manifest.config_sha256);
    for (split, count) in &manifest.counts {
        println!("{split}: {count} samples");
    }
}

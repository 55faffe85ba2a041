//! Bit-exact model checkpoints.
//!
//! A checkpoint captures everything needed to resume or evaluate a training
//! run: the model config, every named parameter tensor, the full Adam state,
//! the epoch and best validation loss, and the RNG contract (algorithm
//! identifier plus the run's master seed — all randomness in training is
//! derived from the master seed per purpose and index, so no generator
//! position needs to be stored). Reloading reproduces forward outputs and
//! subsequent optimizer steps bit-exactly.
//!
//! The file layout is little-endian throughout:
//!
//! ```text
//! magic "TMPC", version u16, reserved u16
//! config_len u32, config TOML bytes
//! epoch u64, best_val_loss f64
//! rng_len u16, rng algorithm id bytes, master_seed u64
//! param_count u32, then per parameter:
//!   name_len u16, name bytes, rank u8, dims u32×rank, data f64×prod(dims)
//! adam: step u64, beta1 f64, beta2 f64, eps_hat f64, learning_rate f64,
//!       moment_len u32, m f64×len, v f64×len
//! ```

use std::path::Path;

use crate::dataset::RNG_ALGORITHM;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Seq2Seq};
use crate::nn::AdamState;

/// Magic bytes identifying a checkpoint file.
pub const MAGIC: [u8; 4] = *b"TMPC";

/// Version written by this crate; the only version it can read.
pub const FORMAT_VERSION: u16 = 1;

/// A complete training state snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    /// Architecture description; its layout names the parameter blocks.
    pub config: ModelConfig,
    /// Flat parameter vector in layout order.
    pub params: Vec<f64>,
    /// Optimizer state, moment-for-moment.
    pub adam: AdamState,
    /// Zero-based epoch index this snapshot was taken at.
    pub epoch: u64,
    /// Best validation loss seen up to and including `epoch`.
    pub best_val_loss: f64,
    /// RNG contract identifier (see [`crate::rng`]).
    pub rng_algorithm: String,
    /// Master seed of the training run; with the algorithm id this is the
    /// complete RNG state, since every draw is derived per purpose and index.
    pub master_seed: u64,
}

impl ModelCheckpoint {
    /// Cross-checks the parameter vector and optimizer state against the
    /// config's layout.
    pub fn validate(&self) -> Result<Seq2Seq> {
        let model = Seq2Seq::new(self.config.clone())?;
        if self.params.len() != model.param_len() {
            return Err(Error::shape(format!(
                "checkpoint has {} parameters, layout expects {}",
                self.params.len(),
                model.param_len()
            )));
        }
        if self.adam.first_moment().len() != self.params.len() {
            return Err(Error::shape(format!(
                "adam tracks {} moments for {} parameters",
                self.adam.first_moment().len(),
                self.params.len()
            )));
        }
        if self.rng_algorithm != RNG_ALGORITHM {
            return Err(Error::invalid(format!(
                "unknown rng algorithm {:?}, this build implements {RNG_ALGORITHM:?}",
                self.rng_algorithm
            )));
        }
        Ok(model)
    }
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Result<Vec<u8>> {
    let model = ckpt.validate()?;
    let config_text = toml::to_string(&ckpt.config)
        .map_err(|err| Error::invalid(format!("config serialization failed: {err}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&u32::try_from(config_text.len()).unwrap().to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.extend_from_slice(&ckpt.epoch.to_le_bytes());
    out.extend_from_slice(&ckpt.best_val_loss.to_le_bytes());
    out.extend_from_slice(&u16::try_from(ckpt.rng_algorithm.len()).unwrap().to_le_bytes());
    out.extend_from_slice(ckpt.rng_algorithm.as_bytes());
    out.extend_from_slice(&ckpt.master_seed.to_le_bytes());

    let entries = model.layout().entries();
    out.extend_from_slice(&u32::try_from(entries.len()).unwrap().to_le_bytes());
    for entry in entries {
        let len: usize = entry.shape.iter().product();
        out.extend_from_slice(&u16::try_from(entry.name.len()).unwrap().to_le_bytes());
        out.extend_from_slice(entry.name.as_bytes());
        out.push(u8::try_from(entry.shape.len()).unwrap());
        for &dim in &entry.shape {
            out.extend_from_slice(&u32::try_from(dim).unwrap().to_le_bytes());
        }
        for &value in &ckpt.params[entry.offset..entry.offset + len] {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }

    out.extend_from_slice(&ckpt.adam.step_count().to_le_bytes());
    out.extend_from_slice(&ckpt.adam.beta1.to_le_bytes());
    out.extend_from_slice(&ckpt.adam.beta2.to_le_bytes());
    out.extend_from_slice(&ckpt.adam.eps_hat.to_le_bytes());
    out.extend_from_slice(&ckpt.adam.learning_rate.to_le_bytes());
    out.extend_from_slice(&u32::try_from(ckpt.adam.first_moment().len()).unwrap().to_le_bytes());
    for &value in ckpt.adam.first_moment() {
        out.extend_from_slice(&value.to_le_bytes());
    }
    for &value in ckpt.adam.second_moment() {
        out.extend_from_slice(&value.to_le_bytes());
    }
    Ok(out)
}

/// Writes a checkpoint to `path`.
pub fn save_checkpoint(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

/// Reads a checkpoint from `path`, validating it against the embedded
/// config's layout.
pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&path.display().to_string(), &bytes)
}

/// Decodes checkpoint bytes; split from [`load_checkpoint`] so tests can
/// probe malformed inputs directly.
pub fn decode_checkpoint(path: &str, bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut cursor = Cursor::new(path, bytes);
    let magic = cursor.take(4, "magic")?;
    if magic != MAGIC {
        return Err(cursor.fail(format!("bad magic bytes {magic:02x?}, expected \"TMPC\"")));
    }
    let version = cursor.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(cursor.fail(format!(
            "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let reserved = cursor.u16("reserved")?;
    if reserved != 0 {
        return Err(cursor.fail(format!("reserved field is {reserved}, expected 0")));
    }

    let config_len = cursor.u32("config length")? as usize;
    let config_bytes = cursor.take(config_len, "config")?;
    let config_text = std::str::from_utf8(config_bytes)
        .map_err(|err| Error::format(path, format!("config is not UTF-8: {err}")))?;
    let config: ModelConfig = toml::from_str(config_text)
        .map_err(|err| Error::format(path, format!("config does not parse: {err}")))?;
    let model = Seq2Seq::new(config.clone())
        .map_err(|err| Error::format(path, format!("config is invalid: {err}")))?;

    let epoch = cursor.u64("epoch")?;
    let best_val_loss = cursor.f64("best validation loss")?;
    let rng_len = cursor.u16("rng id length")? as usize;
    let rng_bytes = cursor.take(rng_len, "rng id")?;
    let rng_algorithm = std::str::from_utf8(rng_bytes)
        .map_err(|err| Error::format(path, format!("rng id is not UTF-8: {err}")))?
        .to_string();
    let master_seed = cursor.u64("master seed")?;

    let param_count = cursor.u32("parameter count")? as usize;
    let entries = model.layout().entries();
    if param_count != entries.len() {
        return Err(cursor.fail(format!(
            "{param_count} parameter blocks, layout expects {}",
            entries.len()
        )));
    }
    let mut params = vec![0.0f64; model.param_len()];
    for entry in entries {
        let name_len = cursor.u16("parameter name length")? as usize;
        let name_bytes = cursor.take(name_len, "parameter name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|err| Error::format(path, format!("parameter name is not UTF-8: {err}")))?;
        if name != entry.name {
            return Err(cursor.fail(format!(
                "parameter block {name:?} where layout expects {:?}",
                entry.name
            )));
        }
        let rank = cursor.take(1, "parameter rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u32("parameter dim")? as usize);
        }
        if shape != entry.shape {
            return Err(cursor.fail(format!(
                "parameter {name:?} has shape {shape:?}, layout expects {:?}",
                entry.shape
            )));
        }
        let len: usize = shape.iter().product();
        for slot in &mut params[entry.offset..entry.offset + len] {
            *slot = cursor.f64("parameter data")?;
        }
    }

    let step = cursor.u64("adam step")?;
    let beta1 = cursor.f64("adam beta1")?;
    let beta2 = cursor.f64("adam beta2")?;
    let eps_hat = cursor.f64("adam eps")?;
    let learning_rate = cursor.f64("adam learning rate")?;
    let moment_len = cursor.u32("adam moment length")? as usize;
    if moment_len != params.len() {
        return Err(cursor.fail(format!(
            "adam tracks {moment_len} moments for {} parameters",
            params.len()
        )));
    }
    let mut m = vec![0.0f64; moment_len];
    for slot in &mut m {
        *slot = cursor.f64("adam first moment")?;
    }
    let mut v = vec![0.0f64; moment_len];
    for slot in &mut v {
        *slot = cursor.f64("adam second moment")?;
    }
    cursor.expect_end()?;

    let adam = AdamState::from_parts(m, v, step, beta1, beta2, eps_hat, learning_rate)?;
    let ckpt = ModelCheckpoint {
        config,
        params,
        adam,
        epoch,
        best_val_loss,
        rng_algorithm,
        master_seed,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

/// Byte reader that turns out-of-bounds reads into structured errors naming
/// the field being read.
struct Cursor<'a> {
    path: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &'a str, bytes: &'a [u8]) -> Self {
        Cursor { path, bytes, pos: 0 }
    }

    fn fail(&self, reason: impl std::fmt::Display) -> Error {
        Error::format(self.path, reason)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                format!(
                    "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(b);
        Ok(u64::from_le_bytes(buf))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(b);
        Ok(f64::from_le_bytes(buf))
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!(
                    "{} trailing bytes after the checkpoint payload",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelVariant;
    use crate::tensor::Tensor;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            variant: ModelVariant::SvsStochastic,
            input_dim: 3,
            output_dim: 4,
            seq_len: 5,
            encoder_hidden: [4, 3],
            latent_dim: 2,
            mc_samples: 1,
        }
    }

    fn sample_checkpoint() -> ModelCheckpoint {
        let config = tiny_config();
        let model = Seq2Seq::new(config.clone()).unwrap();
        let params = model.init_params(33);
        let mut adam = AdamState::new(params.len(), 1e-3);
        // A couple of optimizer steps so the moments are non-trivial.
        let mut theta = params.clone();
        let grads: Vec<f64> = (0..theta.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        adam.update(&mut theta, &grads).unwrap();
        adam.update(&mut theta, &grads).unwrap();
        ModelCheckpoint {
            config,
            params: theta,
            adam,
            epoch: 17,
            best_val_loss: 0.125,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            master_seed: 99,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.ckpt");
        let second = dir.path().join("b.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&first, &ckpt).unwrap();
        let loaded = load_checkpoint(&first).unwrap();
        assert_eq!(loaded, ckpt);
        save_checkpoint(&second, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn reload_reproduces_forward_outputs_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let model = Seq2Seq::new(ckpt.config.clone()).unwrap();
        let y = Tensor::new(
            vec![3, 5],
            (0..15).map(|i| (i as f64 * 0.21).cos()).collect(),
        )
        .unwrap();
        let a = model.encode(&ckpt.params, &y).unwrap();
        let b = model.encode(&loaded.params, &y).unwrap();
        assert_eq!(a, b);
        let w: Vec<f64> = a.mean.clone();
        let da = model.decode(&ckpt.params, &w).unwrap();
        let db = model.decode(&loaded.params, &w).unwrap();
        assert_eq!(da.mean.as_slice(), db.mean.as_slice());
    }

    #[test]
    fn reload_continues_optimization_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let grads: Vec<f64> = (0..ckpt.params.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut theta_a = ckpt.params.clone();
        let mut adam_a = ckpt.adam.clone();
        adam_a.update(&mut theta_a, &grads).unwrap();
        let mut theta_b = loaded.params.clone();
        let mut adam_b = loaded.adam.clone();
        adam_b.update(&mut theta_b, &grads).unwrap();
        assert_eq!(theta_a, theta_b);
        assert_eq!(adam_a.first_moment(), adam_b.first_moment());
        assert_eq!(adam_a.step_count(), adam_b.step_count());
    }

    #[test]
    fn truncation_anywhere_gives_structured_error() {
        let ckpt = sample_checkpoint();
        let bytes = encode_checkpoint(&ckpt).unwrap();
        // Probe a spread of prefix lengths, including cutting the header,
        // the config, a parameter block, and the adam moments.
        for keep in [0, 3, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            let err = decode_checkpoint("mem", &bytes[..keep]).unwrap_err();
            assert!(
                matches!(err, Error::Format { .. }),
                "prefix {keep}: got {err:?}"
            );
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let ckpt = sample_checkpoint();
        let mut bytes = encode_checkpoint(&ckpt).unwrap();
        bytes.push(0);
        let err = decode_checkpoint("mem", &bytes).unwrap_err();
        assert!(err.to_string().contains("trailing"), "got {err}");
    }

    #[test]
    fn corrupt_magic_and_version_are_rejected() {
        let ckpt = sample_checkpoint();
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_checkpoint("mem", &bad_magic)
            .unwrap_err()
            .to_string()
            .contains("magic"));
        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(decode_checkpoint("mem", &bad_version)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn wrong_rng_algorithm_is_rejected() {
        let mut ckpt = sample_checkpoint();
        ckpt.rng_algorithm = "other-rng-v9".to_string();
        assert!(encode_checkpoint(&ckpt).is_err());
    }

    #[test]
    fn validate_rejects_mismatched_lengths() {
        let mut ckpt = sample_checkpoint();
        ckpt.params.pop();
        assert!(ckpt.validate().is_err());
    }
}

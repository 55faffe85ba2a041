//! Sequence encoder–decoder models mapping surface measurements to source
//! sequences.
//!
//! Five variants share one code path. They differ in how the encoder
//! summarizes the measurement sequence into a latent code and whether that
//! code is a point estimate or a diagonal Gaussian:
//!
//! * `svs` — *sequence→vector→sequence*: the encoder LSTM stack runs over all
//!   `T` steps and every output feeds the latent heads, so the code is a
//!   global summary of the whole sequence.
//! * `svs-L` — like `svs`, but the heads read only the final encoder state.
//! * `sss` — *sequence→sequence→sequence*: the heads apply per timestep, so
//!   the latent is itself a `T`-step sequence and nothing forces a global
//!   summary.
//!
//! `svs` and `svs-L` come in stochastic and deterministic flavors; `sss` is
//! stochastic only. Stochastic variants emit a mean and a log-variance and
//! are sampled by reparameterization (`w = t + exp(s/2) ⊙ ε`); deterministic
//! variants emit only the mean and use `w = t` — the zero-spread limit of the
//! same code path, with the absent log-variance represented as `None` rather
//! than a `−∞` vector.
//!
//! The decoder mirrors the encoder: a fully connected layer expands the
//! vector latents back into a `T`-step sequence (the `sss` decoder consumes
//! its latent sequence directly), an LSTM re-widens it, and two head LSTMs
//! emit the reconstruction mean and its log-variance. Both log-variance
//! outputs are clamped to [−10, 10] so the likelihood's `exp(−s)` scaling
//! cannot blow up; the clamp backpropagates as zero outside the open
//! interval.
//!
//! All parameters live in one flat `Vec<f64>` described by an [`nn::Layout`]
//! (see [`Seq2Seq::layout`]); gradients are computed by the hand-written
//! [`Seq2Seq::backward`] and verified against finite differences in the test
//! suite.
//!
//! [`nn::Layout`]: crate::nn::Layout

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    lstm_sequence_backward, lstm_sequence_forward, Dense, Layout, LstmCellParams,
    LstmSequenceCache,
};
use crate::rng::{fill_standard_normal, stream, StreamKind};
use crate::tensor::Tensor;

/// Symmetric bound applied to every log-variance output.
pub const LOG_VAR_CLAMP: f64 = 10.0;

/// The five architecture variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Global vector latent, diagonal-Gaussian posterior.
    SvsStochastic,
    /// Global vector latent, point estimate.
    SvsDeterministic,
    /// Final-state vector latent, diagonal-Gaussian posterior.
    SvsLStochastic,
    /// Final-state vector latent, point estimate.
    SvsLDeterministic,
    /// Per-timestep latent sequence, diagonal-Gaussian posterior.
    SssStochastic,
}

/// How the encoder heads consume the LSTM stack output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// Heads read the concatenation of all `T` outputs.
    Svs,
    /// Heads read the final output only.
    SvsL,
    /// Heads apply independently at every timestep.
    Sss,
}

impl ModelVariant {
    /// All variants, in the order experiments iterate them.
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::SvsStochastic,
        ModelVariant::SvsDeterministic,
        ModelVariant::SvsLStochastic,
        ModelVariant::SvsLDeterministic,
        ModelVariant::SssStochastic,
    ];

    /// Whether the latent carries a log-variance and is sampled.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            ModelVariant::SvsStochastic
                | ModelVariant::SvsLStochastic
                | ModelVariant::SssStochastic
        )
    }

    /// Stable kebab-case name used in CLIs, manifests, and reports.
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::SvsStochastic => "svs-stochastic",
            ModelVariant::SvsDeterministic => "svs-deterministic",
            ModelVariant::SvsLStochastic => "svs-l-stochastic",
            ModelVariant::SvsLDeterministic => "svs-l-deterministic",
            ModelVariant::SssStochastic => "sss-stochastic",
        }
    }

    fn family(self) -> Family {
        match self {
            ModelVariant::SvsStochastic | ModelVariant::SvsDeterministic => Family::Svs,
            ModelVariant::SvsLStochastic | ModelVariant::SvsLDeterministic => Family::SvsL,
            ModelVariant::SssStochastic => Family::Sss,
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown model variant {s:?}; expected one of {}",
                    ModelVariant::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Which of the five variants to build.
    pub variant: ModelVariant,
    /// Measurement channels `M` per timestep.
    pub input_dim: usize,
    /// Source nodes `U` per timestep.
    pub output_dim: usize,
    /// Sequence length `T`.
    pub seq_len: usize,
    /// Encoder LSTM widths `[h1, h2]`; the decoder mirrors them.
    pub encoder_hidden: [usize; 2],
    /// Latent width `d` (per timestep for `sss`).
    pub latent_dim: usize,
    /// Reparameterization draws averaged per forward pass.
    pub mc_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: ModelVariant::SvsStochastic,
            input_dim: 16,
            output_dim: 64,
            seq_len: 60,
            encoder_hidden: [12, 8],
            latent_dim: 16,
            mc_samples: 1,
        }
    }
}

impl ModelConfig {
    /// Checks every size is usable.
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("output_dim", self.output_dim),
            ("seq_len", self.seq_len),
            ("encoder_hidden[0]", self.encoder_hidden[0]),
            ("encoder_hidden[1]", self.encoder_hidden[1]),
            ("latent_dim", self.latent_dim),
            ("mc_samples", self.mc_samples),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Length of the flat latent vector: `d`, or `T·d` for `sss`.
    pub fn latent_len(&self) -> usize {
        match self.variant.family() {
            Family::Svs | Family::SvsL => self.latent_dim,
            Family::Sss => self.seq_len * self.latent_dim,
        }
    }
}

/// Latent code emitted by the encoder.
///
/// For `sss` the vectors are the row-major flattening of `T` per-timestep
/// codes of width `d`; sampling is elementwise either way, so downstream
/// code rarely needs to care.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    /// Mean `t`.
    pub mean: Vec<f64>,
    /// Log-variance `log σ_t²`, clamped to `±`[`LOG_VAR_CLAMP`];
    /// `None` for deterministic variants (zero spread).
    pub log_var: Option<Vec<f64>>,
}

impl LatentDistribution {
    /// Flat latent length.
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    /// True when the mean vector is empty (never for a valid model).
    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Whether the code carries spread.
    pub fn is_stochastic(&self) -> bool {
        self.log_var.is_some()
    }
}

/// Reconstruction emitted by the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    /// Mean `g(w)`, `U×T`.
    pub mean: Tensor,
    /// Log-variance `log σ_x²`, `U×T`, clamped to `±`[`LOG_VAR_CLAMP`].
    pub log_var: Tensor,
}

/// Samples `w = t + exp(log_var/2) ⊙ ε` with the caller's noise vector.
///
/// Deterministic codes return the mean unchanged (`ε` is still required to
/// have the right length so call sites cannot silently desynchronize).
pub fn reparameterize_with(dist: &LatentDistribution, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != dist.mean.len() {
        return Err(Error::shape(format!(
            "noise vector of length {} for a latent of length {}",
            eps.len(),
            dist.mean.len()
        )));
    }
    let mut w = dist.mean.clone();
    if let Some(log_var) = &dist.log_var {
        for ((wj, &sj), &ej) in w.iter_mut().zip(log_var).zip(eps) {
            *wj += (0.5 * sj).exp() * ej;
        }
    }
    Ok(w)
}

/// Samples the latent with `ε ~ N(0, I)` drawn from the seeded
/// [`StreamKind::Sampling`] stream; deterministic codes return the mean.
pub fn reparameterize(dist: &LatentDistribution, seed: u64) -> Vec<f64> {
    let mut eps = vec![0.0; dist.mean.len()];
    if dist.is_stochastic() {
        fill_standard_normal(&mut stream(seed, StreamKind::Sampling, 0), &mut eps);
    }
    reparameterize_with(dist, &eps).expect("noise length matches by construction")
}

/// Encoder activations retained for the backward pass.
#[derive(Debug, Clone)]
struct EncodeCache {
    c1: LstmSequenceCache,
    c2: LstmSequenceCache,
    /// Pre-clamp head output; `None` for deterministic variants.
    raw_log_var: Option<Vec<f64>>,
}

/// Decoder activations retained for the backward pass.
#[derive(Debug, Clone)]
struct DecodeCache {
    cd: LstmSequenceCache,
    cm: LstmSequenceCache,
    cv: LstmSequenceCache,
}

/// One reparameterization draw and its decoding.
#[derive(Debug, Clone)]
pub struct Draw {
    /// The noise vector used (all zeros for deterministic variants).
    pub eps: Vec<f64>,
    /// The sampled latent.
    pub w: Vec<f64>,
    /// The decoded reconstruction.
    pub output: DecoderOutput,
    cache: DecodeCache,
}

/// Everything produced by one forward pass, ready for the loss and for
/// [`Seq2Seq::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// The encoder's latent code.
    pub latent: LatentDistribution,
    draws: Vec<Draw>,
    enc: EncodeCache,
}

impl ForwardPass {
    /// The reparameterization draws, `mc_samples` of them.
    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    /// Decoded outputs in draw order.
    pub fn outputs(&self) -> impl Iterator<Item = &DecoderOutput> {
        self.draws.iter().map(|d| &d.output)
    }
}

/// Gradients of a scalar loss with respect to everything a [`ForwardPass`]
/// exposes. Produced by the loss module, consumed by [`Seq2Seq::backward`].
#[derive(Debug, Clone)]
pub struct LossGrads {
    /// `∂L/∂mean` per draw, `U×T`, with any draw averaging already applied.
    pub d_mean: Vec<Tensor>,
    /// `∂L/∂log_var` per draw, `U×T`.
    pub d_log_var: Vec<Tensor>,
    /// Direct `∂L/∂t` (the divergence term), flat latent length.
    pub d_latent_mean: Vec<f64>,
    /// Direct `∂L/∂log σ_t²`, flat latent length.
    pub d_latent_log_var: Vec<f64>,
}

/// A built model: configuration, parameter layout, and layer handles.
#[derive(Debug, Clone)]
pub struct Seq2Seq {
    config: ModelConfig,
    layout: Layout,
    enc_lstm1: LstmCellParams,
    enc_lstm2: LstmCellParams,
    enc_mean: Dense,
    enc_log_var: Option<Dense>,
    dec_expand: Option<Dense>,
    dec_lstm: LstmCellParams,
    dec_mean: LstmCellParams,
    dec_log_var: LstmCellParams,
}

impl Seq2Seq {
    /// Builds the layer graph and parameter layout for `config`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let [h1, h2] = config.encoder_hidden;
        let (m, u, t_len, d) = (
            config.input_dim,
            config.output_dim,
            config.seq_len,
            config.latent_dim,
        );
        let head_in = match config.variant.family() {
            Family::Svs => t_len * h2,
            Family::SvsL | Family::Sss => h2,
        };

        let mut b = Layout::builder();
        let enc_lstm1 = LstmCellParams::register(&mut b, "enc.lstm1", m, h1);
        let enc_lstm2 = LstmCellParams::register(&mut b, "enc.lstm2", h1, h2);
        let enc_mean = Dense::register(&mut b, "enc.mean", head_in, d);
        let enc_log_var = config
            .variant
            .is_stochastic()
            .then(|| Dense::register(&mut b, "enc.log_var", head_in, d));
        let (dec_expand, dec_in) = match config.variant.family() {
            Family::Svs | Family::SvsL => {
                (Some(Dense::register(&mut b, "dec.expand", d, t_len * h2)), h2)
            }
            Family::Sss => (None, d),
        };
        let dec_lstm = LstmCellParams::register(&mut b, "dec.lstm", dec_in, h1);
        let dec_mean = LstmCellParams::register(&mut b, "dec.mean", h1, u);
        let dec_log_var = LstmCellParams::register(&mut b, "dec.log_var", h1, u);

        Ok(Seq2Seq {
            config,
            layout: b.finish(),
            enc_lstm1,
            enc_lstm2,
            enc_mean,
            enc_log_var,
            dec_expand,
            dec_lstm,
            dec_mean,
            dec_log_var,
        })
    }

    /// The architecture this model was built from.
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Names, shapes, and offsets of every parameter tensor.
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Total trainable parameter count.
    pub fn param_len(&self) -> usize {
        self.layout.total_len()
    }

    /// Draws an initial parameter vector from the seeded
    /// [`StreamKind::Init`] stream: matrices uniform in `±1/√fan_in`,
    /// biases zero except forget gates at 1 (the usual trick that keeps
    /// long-range memory open early in training).
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = stream(seed, StreamKind::Init, 0);
        let mut theta = vec![0.0; self.layout.total_len()];
        for entry in self.layout.entries() {
            let slot = &mut theta[entry.offset..entry.offset + entry.len()];
            if entry.shape.len() == 2 {
                let bound = 1.0 / (entry.shape[1] as f64).sqrt();
                for v in slot {
                    *v = rng.random_range(-bound..bound);
                }
            } else if entry.name.ends_with(".b_f") {
                slot.fill(1.0);
            }
        }
        theta
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.total_len() {
            return Err(Error::shape(format!(
                "parameter vector of length {} for a model with {} parameters",
                theta.len(),
                self.layout.total_len()
            )));
        }
        Ok(())
    }

    /// Encodes a measurement sequence into its latent code.
    pub fn encode(&self, theta: &[f64], y: &Tensor) -> Result<LatentDistribution> {
        Ok(self.encode_cached(theta, y)?.0)
    }

    fn encode_cached(&self, theta: &[f64], y: &Tensor) -> Result<(LatentDistribution, EncodeCache)> {
        self.check_theta(theta)?;
        let (m, t_len, d) = (self.config.input_dim, self.config.seq_len, self.config.latent_dim);
        if y.rows() != m || y.cols() != t_len {
            return Err(Error::shape(format!(
                "measurement {}×{} does not match model input {m}×{t_len}",
                y.rows(),
                y.cols()
            )));
        }

        let mut x_seq = vec![0.0; t_len * m];
        for t in 0..t_len {
            for e in 0..m {
                x_seq[t * m + e] = y.get(e, t);
            }
        }
        let c1 = lstm_sequence_forward(&self.enc_lstm1, theta, &x_seq)?;
        let c2 = lstm_sequence_forward(&self.enc_lstm2, theta, c1.outputs())?;

        let latent_len = self.config.latent_len();
        let mut mean = vec![0.0; latent_len];
        let mut raw_log_var =
            self.config.variant.is_stochastic().then(|| vec![0.0; latent_len]);
        match self.config.variant.family() {
            Family::Svs => {
                self.enc_mean.forward(theta, c2.outputs(), &mut mean);
                if let (Some(head), Some(raw)) = (&self.enc_log_var, &mut raw_log_var) {
                    head.forward(theta, c2.outputs(), raw);
                }
            }
            Family::SvsL => {
                self.enc_mean.forward(theta, c2.last_output(), &mut mean);
                if let (Some(head), Some(raw)) = (&self.enc_log_var, &mut raw_log_var) {
                    head.forward(theta, c2.last_output(), raw);
                }
            }
            Family::Sss => {
                let h2 = self.config.encoder_hidden[1];
                for t in 0..t_len {
                    let feat = &c2.outputs()[t * h2..(t + 1) * h2];
                    self.enc_mean.forward(theta, feat, &mut mean[t * d..(t + 1) * d]);
                    if let (Some(head), Some(raw)) = (&self.enc_log_var, &mut raw_log_var) {
                        head.forward(theta, feat, &mut raw[t * d..(t + 1) * d]);
                    }
                }
            }
        }

        let log_var = raw_log_var
            .as_ref()
            .map(|raw| raw.iter().map(|&v| v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP)).collect());
        let latent = LatentDistribution { mean, log_var };
        Ok((latent, EncodeCache { c1, c2, raw_log_var }))
    }

    /// Decodes a sampled latent into a reconstruction.
    pub fn decode(&self, theta: &[f64], w: &[f64]) -> Result<DecoderOutput> {
        Ok(self.decode_cached(theta, w)?.0)
    }

    fn decode_cached(&self, theta: &[f64], w: &[f64]) -> Result<(DecoderOutput, DecodeCache)> {
        self.check_theta(theta)?;
        if w.len() != self.config.latent_len() {
            return Err(Error::shape(format!(
                "latent of length {} for a model expecting {}",
                w.len(),
                self.config.latent_len()
            )));
        }
        let (u, t_len) = (self.config.output_dim, self.config.seq_len);
        let h2 = self.config.encoder_hidden[1];

        let cd = match &self.dec_expand {
            Some(expand) => {
                let mut z = vec![0.0; t_len * h2];
                expand.forward(theta, w, &mut z);
                lstm_sequence_forward(&self.dec_lstm, theta, &z)?
            }
            None => lstm_sequence_forward(&self.dec_lstm, theta, w)?,
        };
        let cm = lstm_sequence_forward(&self.dec_mean, theta, cd.outputs())?;
        let cv = lstm_sequence_forward(&self.dec_log_var, theta, cd.outputs())?;

        // Head outputs are time-major [T, U]; the public matrices are U×T.
        let mut mean = Tensor::zeros(&[u, t_len]);
        let mut log_var = Tensor::zeros(&[u, t_len]);
        for t in 0..t_len {
            for n in 0..u {
                mean.set(n, t, cm.outputs()[t * u + n]);
                log_var.set(
                    n,
                    t,
                    cv.outputs()[t * u + n].clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP),
                );
            }
        }
        Ok((DecoderOutput { mean, log_var }, DecodeCache { cd, cm, cv }))
    }

    /// Full pass: encode, draw `mc_samples` latents from the seeded
    /// [`StreamKind::Sampling`] streams (all-zero noise for deterministic
    /// variants, so their output is seed-independent), decode each.
    pub fn forward(&self, theta: &[f64], y: &Tensor, seed: u64) -> Result<ForwardPass> {
        let latent_len = self.config.latent_len();
        let eps: Vec<Vec<f64>> = (0..self.config.mc_samples)
            .map(|k| {
                let mut e = vec![0.0; latent_len];
                if self.config.variant.is_stochastic() {
                    fill_standard_normal(&mut stream(seed, StreamKind::Sampling, k as u64), &mut e);
                }
                e
            })
            .collect();
        self.forward_with_eps(theta, y, &eps)
    }

    /// Full pass with caller-supplied noise vectors, one per draw. This is
    /// the frozen-noise entry point used by gradient checks and diagnostics.
    pub fn forward_with_eps(
        &self,
        theta: &[f64],
        y: &Tensor,
        eps: &[Vec<f64>],
    ) -> Result<ForwardPass> {
        if eps.len() != self.config.mc_samples {
            return Err(Error::shape(format!(
                "{} noise vectors for mc_samples={}",
                eps.len(),
                self.config.mc_samples
            )));
        }
        let (latent, enc) = self.encode_cached(theta, y)?;
        let mut draws = Vec::with_capacity(eps.len());
        for e in eps {
            let w = reparameterize_with(&latent, e)?;
            let (output, cache) = self.decode_cached(theta, &w)?;
            draws.push(Draw { eps: e.clone(), w, output, cache });
        }
        Ok(ForwardPass { latent, draws, enc })
    }

    /// Accumulates `∂L/∂θ` into `grad_theta` for a cached forward pass and
    /// the loss gradients computed on it.
    pub fn backward(
        &self,
        theta: &[f64],
        pass: &ForwardPass,
        grads: &LossGrads,
        grad_theta: &mut [f64],
    ) -> Result<()> {
        self.check_theta(theta)?;
        if grad_theta.len() != theta.len() {
            return Err(Error::shape("gradient buffer does not match parameter vector"));
        }
        if grads.d_mean.len() != pass.draws.len() || grads.d_log_var.len() != pass.draws.len() {
            return Err(Error::shape(format!(
                "loss gradients cover {} draws, pass has {}",
                grads.d_mean.len(),
                pass.draws.len()
            )));
        }
        let latent_len = self.config.latent_len();
        if grads.d_latent_mean.len() != latent_len || grads.d_latent_log_var.len() != latent_len {
            return Err(Error::shape("latent gradient length mismatch"));
        }

        let mut d_t = grads.d_latent_mean.clone();
        let mut d_s = grads.d_latent_log_var.clone();
        let mut d_w = vec![0.0; latent_len];
        for (k, draw) in pass.draws.iter().enumerate() {
            d_w.iter_mut().for_each(|v| *v = 0.0);
            self.decode_backward(
                theta,
                draw,
                &grads.d_mean[k],
                &grads.d_log_var[k],
                grad_theta,
                &mut d_w,
            )?;
            for j in 0..latent_len {
                d_t[j] += d_w[j];
            }
            if pass.latent.is_stochastic() {
                // ∂w/∂s = ½·exp(s/2)·ε = ½·(w − t).
                for j in 0..latent_len {
                    d_s[j] += d_w[j] * 0.5 * (draw.w[j] - pass.latent.mean[j]);
                }
            }
        }
        self.encode_backward(theta, &pass.enc, &d_t, &d_s, grad_theta)
    }

    fn decode_backward(
        &self,
        theta: &[f64],
        draw: &Draw,
        g_mean: &Tensor,
        g_log_var: &Tensor,
        grad_theta: &mut [f64],
        d_w: &mut [f64],
    ) -> Result<()> {
        let (u, t_len) = (self.config.output_dim, self.config.seq_len);
        let h1 = self.config.encoder_hidden[0];
        if g_mean.rows() != u || g_mean.cols() != t_len || g_log_var.rows() != u
            || g_log_var.cols() != t_len
        {
            return Err(Error::shape("output gradient is not U×T"));
        }
        let cache = &draw.cache;

        // Back to time-major, gating the log-variance path on the clamp.
        let mut gm_seq = vec![0.0; t_len * u];
        let mut gs_seq = vec![0.0; t_len * u];
        for t in 0..t_len {
            for n in 0..u {
                gm_seq[t * u + n] = g_mean.get(n, t);
                let raw = cache.cv.outputs()[t * u + n];
                if raw.abs() < LOG_VAR_CLAMP {
                    gs_seq[t * u + n] = g_log_var.get(n, t);
                }
            }
        }

        let mut d_h1 = vec![0.0; t_len * h1];
        lstm_sequence_backward(&self.dec_mean, theta, &cache.cm, &gm_seq, grad_theta, &mut d_h1)?;
        lstm_sequence_backward(&self.dec_log_var, theta, &cache.cv, &gs_seq, grad_theta, &mut d_h1)?;

        match &self.dec_expand {
            Some(expand) => {
                let h2 = self.config.encoder_hidden[1];
                let mut d_z = vec![0.0; t_len * h2];
                lstm_sequence_backward(&self.dec_lstm, theta, &cache.cd, &d_h1, grad_theta, &mut d_z)?;
                expand.backward(theta, &draw.w, &d_z, grad_theta, d_w);
            }
            None => {
                lstm_sequence_backward(&self.dec_lstm, theta, &cache.cd, &d_h1, grad_theta, d_w)?;
            }
        }
        Ok(())
    }

    fn encode_backward(
        &self,
        theta: &[f64],
        cache: &EncodeCache,
        d_mean: &[f64],
        d_log_var: &[f64],
        grad_theta: &mut [f64],
    ) -> Result<()> {
        let t_len = self.config.seq_len;
        let (h1, h2) = (self.config.encoder_hidden[0], self.config.encoder_hidden[1]);
        let d = self.config.latent_dim;

        // Gate the log-variance gradient on the clamp.
        let masked: Option<Vec<f64>> = cache.raw_log_var.as_ref().map(|raw| {
            d_log_var
                .iter()
                .zip(raw)
                .map(|(&g, &r)| if r.abs() < LOG_VAR_CLAMP { g } else { 0.0 })
                .collect()
        });

        let mut d_h2 = vec![0.0; t_len * h2];
        match self.config.variant.family() {
            Family::Svs => {
                self.enc_mean.backward(theta, cache.c2.outputs(), d_mean, grad_theta, &mut d_h2);
                if let (Some(head), Some(gs)) = (&self.enc_log_var, &masked) {
                    head.backward(theta, cache.c2.outputs(), gs, grad_theta, &mut d_h2);
                }
            }
            Family::SvsL => {
                let last = &mut d_h2[(t_len - 1) * h2..];
                self.enc_mean.backward(theta, cache.c2.last_output(), d_mean, grad_theta, last);
                if let (Some(head), Some(gs)) = (&self.enc_log_var, &masked) {
                    head.backward(theta, cache.c2.last_output(), gs, grad_theta, last);
                }
            }
            Family::Sss => {
                for t in 0..t_len {
                    let feat = &cache.c2.outputs()[t * h2..(t + 1) * h2];
                    let slot = &mut d_h2[t * h2..(t + 1) * h2];
                    self.enc_mean.backward(
                        theta,
                        feat,
                        &d_mean[t * d..(t + 1) * d],
                        grad_theta,
                        slot,
                    );
                    if let (Some(head), Some(gs)) = (&self.enc_log_var, &masked) {
                        head.backward(theta, feat, &gs[t * d..(t + 1) * d], grad_theta, slot);
                    }
                }
            }
        }

        let mut d_h1 = vec![0.0; t_len * h1];
        lstm_sequence_backward(&self.enc_lstm2, theta, &cache.c2, &d_h2, grad_theta, &mut d_h1)?;
        let mut d_x = vec![0.0; t_len * self.config.input_dim];
        lstm_sequence_backward(&self.enc_lstm1, theta, &cache.c1, &d_h1, grad_theta, &mut d_x)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check_all;
    use crate::tensor::dot;
    use rand::Rng;

    fn tiny_config(variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim: 3,
            output_dim: 4,
            seq_len: 4,
            encoder_hidden: [4, 3],
            latent_dim: 2,
            mc_samples: 1,
        }
    }

    fn random_measurement(m: usize, t_len: usize, seed: u64) -> Tensor {
        let mut rng = crate::rng::stream(seed, StreamKind::Diagnostics, 7);
        let data = (0..m * t_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![m, t_len], data).unwrap()
    }

    #[test]
    fn latent_width_is_independent_of_sequence_length() {
        for t_len in [30, 60] {
            let config = ModelConfig { seq_len: t_len, ..ModelConfig::default() };
            let model = Seq2Seq::new(config).unwrap();
            let theta = model.init_params(1);
            let y = random_measurement(16, t_len, 3);
            let latent = model.encode(&theta, &y).unwrap();
            assert_eq!(latent.len(), 16, "T={t_len}");
            assert_eq!(latent.log_var.as_ref().unwrap().len(), 16);
        }
    }

    #[test]
    fn sss_latent_is_a_sequence() {
        let config = ModelConfig {
            variant: ModelVariant::SssStochastic,
            ..ModelConfig::default()
        };
        let model = Seq2Seq::new(config).unwrap();
        let theta = model.init_params(2);
        let latent = model.encode(&theta, &random_measurement(16, 60, 4)).unwrap();
        assert_eq!(latent.len(), 60 * 16);
    }

    #[test]
    fn svs_l_zero_weights_put_the_head_bias_in_the_mean() {
        let config = tiny_config(ModelVariant::SvsLStochastic);
        let model = Seq2Seq::new(config).unwrap();
        let mut theta = vec![0.0; model.param_len()];
        let bias = model.layout().entry("enc.mean.b").unwrap();
        theta[bias.offset..bias.offset + bias.len()].copy_from_slice(&[0.25, -1.5]);
        let latent = model.encode(&theta, &random_measurement(3, 4, 5)).unwrap();
        assert_eq!(latent.mean, vec![0.25, -1.5]);
    }

    #[test]
    fn decoder_shapes_are_output_by_time() {
        for variant in ModelVariant::ALL {
            let model = Seq2Seq::new(tiny_config(variant)).unwrap();
            let theta = model.init_params(3);
            let w = vec![0.1; model.config().latent_len()];
            let out = model.decode(&theta, &w).unwrap();
            assert_eq!(out.mean.shape(), &[4, 4], "{variant}");
            assert_eq!(out.log_var.shape(), &[4, 4], "{variant}");
        }
    }

    #[test]
    fn zero_parameters_decode_to_the_zero_bias_constant() {
        let model = Seq2Seq::new(tiny_config(ModelVariant::SvsStochastic)).unwrap();
        let theta = vec![0.0; model.param_len()];
        let out = model.decode(&theta, &[0.4, -0.3]).unwrap();
        assert!(out.mean.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.log_var.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_forward_ignores_the_seed() {
        for variant in [ModelVariant::SvsDeterministic, ModelVariant::SvsLDeterministic] {
            let model = Seq2Seq::new(tiny_config(variant)).unwrap();
            let theta = model.init_params(5);
            let y = random_measurement(3, 4, 6);
            let a = model.forward(&theta, &y, 100).unwrap();
            let b = model.forward(&theta, &y, 200).unwrap();
            assert!(a.latent.log_var.is_none());
            assert_eq!(a.draws()[0].w, b.draws()[0].w);
            assert_eq!(a.draws()[0].output, b.draws()[0].output);
        }
    }

    #[test]
    fn nearly_frozen_spread_makes_seeds_almost_agree() {
        // Pin the latent log-variance head at its clamp floor; different
        // sampling seeds must then barely move the reconstruction.
        let model = Seq2Seq::new(ModelConfig::default()).unwrap();
        let mut theta = model.init_params(7);
        let head = model.layout().entry("enc.log_var.w").unwrap();
        theta[head.offset..head.offset + head.len()].fill(0.0);
        let bias = model.layout().entry("enc.log_var.b").unwrap();
        theta[bias.offset..bias.offset + bias.len()].fill(-2.0 * LOG_VAR_CLAMP);
        let y = random_measurement(16, 60, 8);
        let a = model.forward(&theta, &y, 1).unwrap();
        assert_eq!(a.latent.log_var.as_deref(), Some(&[-LOG_VAR_CLAMP; 16][..]));
        let b = model.forward(&theta, &y, 2).unwrap();
        let diff = a
            .draws()[0]
            .output
            .mean
            .as_slice()
            .iter()
            .zip(b.draws()[0].output.mean.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        assert!(diff > 0.0, "stochastic draws should not be identical");
        assert!(diff < 1e-2, "max output shift {diff}");
    }

    #[test]
    fn reparameterize_matches_the_formula() {
        let dist = LatentDistribution { mean: vec![0.0, 0.0], log_var: Some(vec![0.0, 0.0]) };
        let w = reparameterize_with(&dist, &[1.0, -1.0]).unwrap();
        assert_eq!(w, vec![1.0, -1.0]);

        let point = LatentDistribution { mean: vec![0.3, -0.7], log_var: None };
        let w = reparameterize_with(&point, &[5.0, 5.0]).unwrap();
        assert_eq!(w, vec![0.3, -0.7]);
        assert_eq!(reparameterize(&point, 9), vec![0.3, -0.7]);
    }

    #[test]
    fn seeded_reparameterization_has_standard_moments() {
        let dist = LatentDistribution { mean: vec![0.0, 0.0], log_var: Some(vec![0.0, 0.0]) };
        let n = 100_000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for i in 0..n {
            let mut eps = [0.0; 2];
            fill_standard_normal(&mut stream(13, StreamKind::Sampling, i), &mut eps);
            let w = reparameterize_with(&dist, &eps).unwrap();
            for j in 0..2 {
                sums[j] += w[j];
                sq[j] += w[j] * w[j];
            }
        }
        for j in 0..2 {
            let mean = sums[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn mc_samples_controls_the_draw_count() {
        let config = ModelConfig { mc_samples: 2, ..tiny_config(ModelVariant::SvsStochastic) };
        let model = Seq2Seq::new(config).unwrap();
        let theta = model.init_params(11);
        let pass = model.forward(&theta, &random_measurement(3, 4, 12), 0).unwrap();
        assert_eq!(pass.draws().len(), 2);
        assert_ne!(pass.draws()[0].w, pass.draws()[1].w);
    }

    #[test]
    fn decoder_jacobian_matches_finite_differences() {
        // Directional derivative of c·mean(w) against the backward pass.
        let model = Seq2Seq::new(tiny_config(ModelVariant::SssStochastic)).unwrap();
        let theta = model.init_params(21);
        let latent_len = model.config().latent_len();
        let mut rng = crate::rng::stream(22, StreamKind::Diagnostics, 0);
        let w: Vec<f64> = (0..latent_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let f = |w: &[f64]| dot(model.decode(&theta, w).unwrap().mean.as_slice(), &c);
        let (out, cache) = model.decode_cached(&theta, &w).unwrap();
        let draw = Draw { eps: vec![0.0; latent_len], w: w.clone(), output: out, cache };
        let g_mean = Tensor::new(vec![4, 4], c.clone()).unwrap();
        let g_log_var = Tensor::zeros(&[4, 4]);
        let mut grad_theta = vec![0.0; model.param_len()];
        let mut d_w = vec![0.0; latent_len];
        model
            .decode_backward(&theta, &draw, &g_mean, &g_log_var, &mut grad_theta, &mut d_w)
            .unwrap();
        let err = grad_check_all(f, &w, &d_w).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let model = Seq2Seq::new(tiny_config(ModelVariant::SvsStochastic)).unwrap();
        let theta = model.init_params(1);
        assert!(model.encode(&theta, &random_measurement(5, 4, 1)).is_err());
        assert!(model.decode(&theta, &[0.0; 7]).is_err());
        assert!(model.encode(&theta[1..], &random_measurement(3, 4, 1)).is_err());
        assert!(Seq2Seq::new(ModelConfig { latent_dim: 0, ..ModelConfig::default() }).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for variant in ModelVariant::ALL {
            let parsed: ModelVariant = variant.name().parse().unwrap();
            assert_eq!(parsed, variant);
            let config = ModelConfig { variant, ..ModelConfig::default() };
            let toml_repr = toml::to_string(&config).unwrap();
            assert!(toml_repr.contains(variant.name()), "{toml_repr}");
            let back: ModelConfig = toml::from_str(&toml_repr).unwrap();
            assert_eq!(back, config);
        }
        assert!("svs".parse::<ModelVariant>().is_err());
    }
}

//! The variational training objective.
//!
//! One sample's loss is a reconstruction term plus a weighted divergence:
//!
//! ```text
//! total = recon_nll + λ · kl
//! recon_nll = mean over draws of  Σ_i [ (x_i − g_i)² · exp(−s_i) + s_i ]
//! kl        = ½ Σ_j [ exp(s_t,j) + t_j² − 1 − s_t,j ]
//! ```
//!
//! where `g` and `s = log σ_x²` are the decoder's mean and log-variance,
//! `t` and `s_t = log σ_t²` the encoder's. The reconstruction term is the
//! Gaussian negative log-likelihood with its additive constant dropped —
//! with `s ≡ 0` it reduces to a plain sum of squared errors. The divergence
//! is the closed-form KL from the diagonal-Gaussian code to the standard
//! normal; deterministic codes carry no distribution, so they report
//! `kl = 0` and `λ` has no effect.
//!
//! Reductions: *sum* over elements inside one sample, *mean* over
//! reparameterization draws, and callers average over a batch — so `λ`
//! means the same thing at any batch size.

use crate::error::{Error, Result};
use crate::model::{DecoderOutput, ForwardPass, LossGrads};
use crate::tensor::Tensor;

/// One evaluated objective, with the pieces kept separate for curves and
/// reports. `total == recon_nll + lambda·kl` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Draw-averaged reconstruction negative log-likelihood.
    pub recon_nll: f64,
    /// Divergence of the latent code from the standard normal; `≥ 0`,
    /// and `0` for deterministic codes.
    pub kl: f64,
    /// The divergence weight that was applied.
    pub lambda: f64,
    /// `recon_nll + lambda·kl`.
    pub total: f64,
}

/// Closed-form KL divergence from `N(t, diag exp(log_var))` to `N(0, I)`.
pub fn kl_diag_gaussian(t: &[f64], log_var: &[f64]) -> Result<f64> {
    if t.len() != log_var.len() {
        return Err(Error::shape(format!(
            "mean of length {} with log-variance of length {}",
            t.len(),
            log_var.len()
        )));
    }
    let mut kl = 0.0;
    for (&tj, &sj) in t.iter().zip(log_var) {
        if !tj.is_finite() || !sj.is_finite() {
            return Err(Error::invalid("non-finite latent distribution"));
        }
        kl += 0.5 * (sj.exp() + tj * tj - 1.0 - sj);
    }
    Ok(kl)
}

/// Reconstruction negative log-likelihood of one decoded draw:
/// `Σ_i (x_i − g_i)²·exp(−s_i) + s_i`, summed over all `U·T` elements.
pub fn recon_nll(x: &Tensor, out: &DecoderOutput) -> Result<f64> {
    if x.shape() != out.mean.shape() || x.shape() != out.log_var.shape() {
        return Err(Error::shape(format!(
            "target {:?} against decoder output {:?}",
            x.shape(),
            out.mean.shape()
        )));
    }
    let mut nll = 0.0;
    for ((&xi, &gi), &si) in x
        .as_slice()
        .iter()
        .zip(out.mean.as_slice())
        .zip(out.log_var.as_slice())
    {
        let r = xi - gi;
        nll += r * r * (-si).exp() + si;
    }
    if !nll.is_finite() {
        return Err(Error::numerical(format!("non-finite reconstruction loss {nll}")));
    }
    Ok(nll)
}

/// Evaluates the full objective for one sample's forward pass.
pub fn total_loss(x: &Tensor, pass: &ForwardPass, lambda: f64) -> Result<LossBreakdown> {
    if pass.draws().is_empty() {
        return Err(Error::invalid("forward pass carries no draws"));
    }
    let mut recon = 0.0;
    for out in pass.outputs() {
        recon += recon_nll(x, out)?;
    }
    recon /= pass.draws().len() as f64;
    let kl = match &pass.latent.log_var {
        Some(log_var) => kl_diag_gaussian(&pass.latent.mean, log_var)?,
        None => 0.0,
    };
    Ok(LossBreakdown { recon_nll: recon, kl, lambda, total: recon + lambda * kl })
}

/// Evaluates the objective and its gradients with respect to the decoder
/// outputs and the latent distribution, ready for
/// [`Seq2Seq::backward`](crate::model::Seq2Seq::backward).
pub fn loss_gradients(
    x: &Tensor,
    pass: &ForwardPass,
    lambda: f64,
) -> Result<(LossBreakdown, LossGrads)> {
    let breakdown = total_loss(x, pass, lambda)?;
    let scale = 1.0 / pass.draws().len() as f64;
    let latent_len = pass.latent.len();

    let mut d_mean = Vec::with_capacity(pass.draws().len());
    let mut d_log_var = Vec::with_capacity(pass.draws().len());
    for out in pass.outputs() {
        let mut gm = Tensor::zeros(x.shape());
        let mut gs = Tensor::zeros(x.shape());
        for (i, ((&xi, &gi), &si)) in x
            .as_slice()
            .iter()
            .zip(out.mean.as_slice())
            .zip(out.log_var.as_slice())
            .enumerate()
        {
            let r = xi - gi;
            let inv_var = (-si).exp();
            gm.as_mut_slice()[i] = scale * -2.0 * r * inv_var;
            gs.as_mut_slice()[i] = scale * (1.0 - r * r * inv_var);
        }
        d_mean.push(gm);
        d_log_var.push(gs);
    }

    let mut d_latent_mean = vec![0.0; latent_len];
    let mut d_latent_log_var = vec![0.0; latent_len];
    if let Some(log_var) = &pass.latent.log_var {
        for j in 0..latent_len {
            d_latent_mean[j] = lambda * pass.latent.mean[j];
            d_latent_log_var[j] = lambda * 0.5 * (log_var[j].exp() - 1.0);
        }
    }

    Ok((breakdown, LossGrads { d_mean, d_log_var, d_latent_mean, d_latent_log_var }))
}

//! Reconstruction metrics: sequence error, sequence correlation, activation
//! times, activation-time correlation, scar detection, and Dice overlap.
//!
//! Conventions shared by the whole crate: activation time is the frame index
//! of the steepest upstroke (largest forward difference), a node counts as
//! activated only when its peak potential reaches [`ACTIVITY_THRESHOLD`],
//! and scar tissue is delineated by the same peak-amplitude threshold. These
//! are the simplest criteria that are exact on the simulator's ground truth.
//!
//! Metrics that can be undefined — correlations over constant data, too few
//! comparable nodes — return `None` rather than a made-up number; report
//! writers map that to NaN cells.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Peak potential a node must reach to count as activated; doubles as the
/// default scar-detection threshold.
pub const ACTIVITY_THRESHOLD: f64 = 0.3;

/// Mean squared error over all `U·T` entries of two equal-shape sequences.
pub fn mse_seq(x_hat: &Tensor, x: &Tensor) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "mse over mismatched shapes {:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let n = x.len() as f64;
    let sum: f64 = x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Pearson correlation of two equal-length samples; `None` when either side
/// has (numerically) zero variance or fewer than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    // Exactly constant input is undefined by definition; the variance test
    // below additionally catches inputs whose spread is pure rounding noise.
    if a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]) {
        return None;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    let floor = f64::EPSILON * n;
    if var_a <= floor * mean_a * mean_a || var_b <= floor * mean_b * mean_b {
        return None;
    }
    Some(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Pearson correlation over the flattened entries of two sequences.
///
/// `None` flags the undefined case (constant input on either side).
pub fn corr_seq(x_hat: &Tensor, x: &Tensor) -> Result<Option<f64>> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "correlation over mismatched shapes {:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    Ok(pearson(x_hat.as_slice(), x.as_slice()))
}

/// Per-node activation times of a `[nodes, frames]` sequence.
///
/// The activation time is the frame index `t` maximizing the forward
/// difference `u[t+1] − u[t]` (ties resolve to the earliest frame). Nodes
/// whose peak potential stays below [`ACTIVITY_THRESHOLD`] never activated
/// and yield `None`. Needs at least three frames to be meaningful.
pub fn activation_times(x: &Tensor) -> Result<Vec<Option<usize>>> {
    let t_len = x.cols();
    if t_len < 3 {
        return Err(Error::invalid(format!(
            "activation times need at least 3 frames, got {t_len}"
        )));
    }
    let mut times = Vec::with_capacity(x.rows());
    for node in 0..x.rows() {
        let trace = x.row(node);
        let peak = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if peak < ACTIVITY_THRESHOLD {
            times.push(None);
            continue;
        }
        let mut best_t = 0;
        let mut best_rise = trace[1] - trace[0];
        for t in 1..t_len - 1 {
            let rise = trace[t + 1] - trace[t];
            if rise > best_rise {
                best_rise = rise;
                best_t = t;
            }
        }
        times.push(Some(best_t));
    }
    Ok(times)
}

/// Correlation of activation times over nodes that activated in both
/// sequences and are not part of the true scar.
///
/// `None` when fewer than three comparable nodes remain (or the times are
/// constant). The true scar is excluded because its late or missing
/// activation is an expected abnormality, not a reconstruction error.
pub fn at_corr(x_hat: &Tensor, x: &Tensor, scar_truth: &BTreeSet<usize>) -> Result<Option<f64>> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "activation-time correlation over mismatched shapes {:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let t_hat = activation_times(x_hat)?;
    let t_true = activation_times(x)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (node, (hat, truth)) in t_hat.iter().zip(&t_true).enumerate() {
        if scar_truth.contains(&node) {
            continue;
        }
        if let (Some(h), Some(t)) = (hat, truth) {
            a.push(*h as f64);
            b.push(*t as f64);
        }
    }
    if a.len() < 3 {
        return Ok(None);
    }
    Ok(pearson(&a, &b))
}

/// Nodes whose peak potential never reaches `threshold`: the scar estimate.
///
/// `threshold` must lie in `(0, 1]`; the boundary value 1 flags every node
/// that never saturates.
pub fn detect_scar(x: &Tensor, threshold: f64) -> Result<BTreeSet<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "scar threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut scar = BTreeSet::new();
    for node in 0..x.rows() {
        let peak = x.row(node).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if peak < threshold {
            scar.insert(node);
        }
    }
    Ok(scar)
}

/// Dice overlap `2|a∩b| / (|a|+|b|)`; two empty sets count as perfect
/// agreement (1).
pub fn dice(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let overlap = a.intersection(b).count() as f64;
    2.0 * overlap / (a.len() + b.len()) as f64
}

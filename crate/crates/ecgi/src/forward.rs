//! The forward measurement model: `y = Hx` plus calibrated Gaussian noise.
//!
//! `H` maps heart-node potentials to body-surface electrodes through an
//! inverse-square distance kernel with row normalization. The kernel is a
//! stand-in for a boundary-element torso solution: what matters for the
//! inverse problem is that `H` is underdetermined (`M < U`) and severely
//! ill-conditioned, both of which hold by construction and are checked in
//! tests.

use crate::cardiac::TmpSequence;
use crate::error::{Error, Result};
use crate::graph::HeartGraph;
use crate::rng::{self, StreamKind};
use crate::tensor::Tensor;

/// The linear measurement operator with its electrode layout.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    h: Tensor,
    electrode_coordinates: Vec<[f64; 2]>,
    condition_number: f64,
}

impl TransferMatrix {
    /// The `M×U` operator.
    pub fn h(&self) -> &Tensor {
        &self.h
    }

    /// Electrode positions.
    pub fn electrode_coordinates(&self) -> &[[f64; 2]] {
        &self.electrode_coordinates
    }

    /// Ratio of largest to smallest singular value, cached at construction.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Number of electrodes `M`.
    pub fn electrode_count(&self) -> usize {
        self.h.rows()
    }

    /// Number of heart nodes `U`.
    pub fn node_count(&self) -> usize {
        self.h.cols()
    }

    /// Degenerate test hook: the identity operator on `n` nodes
    /// (`M = U`, condition number 1), so `project` returns its input.
    pub fn identity(n: usize) -> Self {
        let mut h = Tensor::zeros(&[n, n]);
        for i in 0..n {
            h.set(i, i, 1.0);
        }
        let electrode_coordinates = (0..n)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [theta.cos(), theta.sin()]
            })
            .collect();
        TransferMatrix {
            h,
            electrode_coordinates,
            condition_number: 1.0,
        }
    }
}

/// A body-surface measurement sequence, shaped `[electrodes, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgSequence {
    /// Measurement matrix `y`.
    pub y: Tensor,
    /// SNR of the applied noise in dB; `None` when no noise was added.
    pub snr_db: Option<f64>,
}

/// Builds the transfer operator for `m` electrodes equally spaced on a circle
/// of radius `torso_radius` around the heart graph.
///
/// Entry `(e, u)` is `1 / (eps + ‖electrode_e − node_u‖²)`, then every row is
/// normalized to sum to 1 (a smoothing kernel). Requires `4 ≤ m < U`,
/// `eps > 0`, and a torso radius strictly outside the node cloud.
pub fn build_transfer(
    graph: &HeartGraph,
    m: usize,
    torso_radius: f64,
    eps: f64,
) -> Result<TransferMatrix> {
    let u = graph.node_count();
    if m < 4 || m >= u {
        return Err(Error::invalid(format!(
            "electrode count must satisfy 4 <= m < {u}, got {m}"
        )));
    }
    if eps <= 0.0 {
        return Err(Error::invalid(format!("softening eps must be positive, got {eps}")));
    }
    let max_node_radius = graph
        .coordinates()
        .iter()
        .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
        .fold(0.0, f64::max);
    if torso_radius <= max_node_radius {
        return Err(Error::invalid(format!(
            "torso radius {torso_radius} must exceed the node radius {max_node_radius}"
        )));
    }

    let electrode_coordinates: Vec<[f64; 2]> = (0..m)
        .map(|e| {
            let theta = 2.0 * std::f64::consts::PI * e as f64 / m as f64;
            [torso_radius * theta.cos(), torso_radius * theta.sin()]
        })
        .collect();
    let mut h = Tensor::zeros(&[m, u]);
    for (e, ec) in electrode_coordinates.iter().enumerate() {
        let row = h.row_mut(e);
        for (n, nc) in graph.coordinates().iter().enumerate() {
            let dx = ec[0] - nc[0];
            let dy = ec[1] - nc[1];
            row[n] = 1.0 / (eps + dx * dx + dy * dy);
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
    }

    let condition_number = condition_number(&h);
    Ok(TransferMatrix {
        h,
        electrode_coordinates,
        condition_number,
    })
}

fn condition_number(h: &Tensor) -> f64 {
    let (m, u) = (h.rows(), h.cols());
    let dm = nalgebra::DMatrix::from_row_iterator(m, u, h.as_slice().iter().copied());
    let sv = dm.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Projects a TMP sequence to electrode measurements: `y = H·x`, frame by
/// frame. The result carries no noise annotation.
pub fn project(transfer: &TransferMatrix, x: &TmpSequence) -> Result<EcgSequence> {
    if x.rows() != transfer.node_count() {
        return Err(Error::shape(format!(
            "transfer expects {} nodes, sequence has {}",
            transfer.node_count(),
            x.rows()
        )));
    }
    Ok(EcgSequence {
        y: transfer.h.matmul(x)?,
        snr_db: None,
    })
}

/// Adds white Gaussian noise calibrated to `snr_db`.
///
/// The noise variance is `P_signal / 10^(snr_db/10)` with `P_signal` the mean
/// squared entry of `y` — one global level per matrix, not per channel.
/// `snr_db = +∞` is the explicit no-noise sentinel and returns the input
/// unchanged. Deterministic given `seed`; an all-zero signal is rejected
/// because its SNR is undefined.
pub fn add_noise(y: &EcgSequence, snr_db: f64, seed: u64) -> Result<EcgSequence> {
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let n = y.y.len() as f64;
    let signal_power = y.y.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    if signal_power == 0.0 {
        return Err(Error::invalid("cannot scale noise to an all-zero signal"));
    }
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = rng::stream(seed, StreamKind::Noise, 0);
    let mut noisy = y.y.clone();
    for v in noisy.as_mut_slice() {
        *v += sigma * rng::standard_normal(&mut rng);
    }
    Ok(EcgSequence {
        y: noisy,
        snr_db: Some(snr_db),
    })
}

//! A desk-scale electrocardiographic imaging (ECGI) laboratory.
//!
//! ECGI reconstructs the electrical activity of the heart — per-node
//! transmembrane potential (TMP) sequences — from body-surface potential
//! measurements. The measurement operator is a smoothing, underdetermined
//! linear map, so the reconstruction is severely ill-posed: classical methods
//! regularize it frame by frame, while learned methods compress whole
//! sequences through a low-dimensional latent code and decode them back.
//!
//! This crate contains every stage of that experiment at a scale where exact
//! numerical verification is practical:
//!
//! * [`graph`] + [`cardiac`] — a ring-lattice heart surrogate and a
//!   two-variable Aliev–Panfilov reaction–diffusion integrator that generates
//!   ground-truth TMP sequences with configurable excitation origin and scar.
//! * [`forward`] — the ill-conditioned transfer matrix, projection to
//!   electrode measurements, and SNR-calibrated Gaussian noise.
//! * [`nn`] — a minimal 64-bit numerical core: dense and LSTM layers with
//!   hand-written backward passes, Adam, and finite-difference gradient
//!   checking. No autodiff framework.
//! * [`model`] — five sequence encoder–decoder variants (`svs`, `svs-L`,
//!   `sss`; stochastic and deterministic) built from those layers.
//! * [`loss`] — the variational training objective: heteroscedastic
//!   reconstruction likelihood plus a λ-weighted KL pull toward the isotropic
//!   Gaussian prior.
//! * [`inverse`] — classical baselines: zero-order Tikhonov and the
//!   Greensite temporal-whitening method.
//! * [`metrics`] + [`cluster`] — reconstruction metrics (MSE, correlations,
//!   activation times, scar dice) and latent-space diagnostics (PCA export,
//!   silhouette scores).
//! * [`theory`] — generalization diagnostics: Monte-Carlo vs. Taylor
//!   expected-loss comparison, finite-difference variation proxies, and a
//!   two-sample anchored-box discrepancy statistic.
//! * [`dataset`], [`train`], [`eval`] — deterministic dataset generation,
//!   the training loop with early stopping, bit-exact checkpoints, and the
//!   evaluation harness behind the `ecgi` command-line tool.
//!
//! Everything is deterministic given explicit seeds; see [`rng`] for the
//! stream-separation scheme.

pub mod cardiac;
pub mod checkpoint;
pub mod cluster;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forward;
pub mod graph;
pub mod inverse;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod tensor;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

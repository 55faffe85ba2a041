//! Classical inverse baselines: per-frame zero-order Tikhonov and the
//! Greensite temporal-whitening scheme.
//!
//! Both reconstruct node potentials from electrode measurements through a
//! fixed transfer matrix, and both are deterministic given their inputs.
//! They anchor the evaluation tables: a learned model that cannot beat a
//! fixed-λ Tikhonov solve is not extracting temporal structure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Settings shared by the classical solvers.
///
/// `lambda_rel` scales the largest singular value of the transfer matrix to
/// produce the Tikhonov weight, `λ = lambda_rel·σ_max`. `energy_threshold`
/// is the fraction of squared singular-value mass of the measurement matrix
/// that the Greensite truncation retains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub lambda_rel: f64,
    pub energy_threshold: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            lambda_rel: 0.01,
            energy_threshold: 0.999,
        }
    }
}

impl RegularizerConfig {
    /// Checks `lambda_rel ≥ 0` and `0 < energy_threshold ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_rel.is_finite() || self.lambda_rel < 0.0 {
            return Err(Error::invalid(format!(
                "lambda_rel must be finite and non-negative, got {}",
                self.lambda_rel
            )));
        }
        if !(self.energy_threshold > 0.0 && self.energy_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "energy_threshold must lie in (0, 1], got {}",
                self.energy_threshold
            )));
        }
        Ok(())
    }
}

/// Precomputed SVD of a transfer matrix, reusable across frames and λ values.
///
/// The factor signs follow a fixed convention — the largest-magnitude entry
/// of each right singular vector is positive — so intermediate quantities are
/// reproducible across linear-algebra backends, not just the final solution.
#[derive(Debug, Clone)]
pub struct TikhonovSolver {
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl TikhonovSolver {
    /// Factorizes the `M×U` transfer matrix `h`.
    pub fn new(h: &Tensor) -> Result<Self> {
        let (rows, cols) = (h.rows(), h.cols());
        if rows == 0 || cols == 0 {
            return Err(Error::shape("transfer matrix must be non-empty"));
        }
        let dm = DMatrix::from_row_iterator(rows, cols, h.as_slice().iter().copied());
        let svd = dm.svd(true, true);
        let (mut u, mut v_t) = (svd.u.expect("left factors"), svd.v_t.expect("right factors"));
        fix_signs(&mut u, &mut v_t);
        Ok(Self {
            u,
            v_t,
            sigma: svd.singular_values.iter().copied().collect(),
            rows,
            cols,
        })
    }

    /// Number of measurement rows the solver expects.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of solution entries the solver produces.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Largest singular value of the factorized matrix.
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Solves `argmin ‖Hx − y‖² + λ²‖x‖²` via SVD filter factors,
    /// `x̂ = Σ_k [σ_k/(σ_k²+λ²)]·(u_kᵀy)·v_k`.
    ///
    /// With `λ = 0` on a rank-deficient matrix, numerically zero singular
    /// values are dropped and the result is the minimum-norm least-squares
    /// solution (the pseudo-inverse applied to `y`).
    pub fn solve(&self, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::shape(format!(
                "solver expects {} measurements, got {}",
                self.rows,
                y.len()
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!(
                "regularization weight must be finite and non-negative, got {lambda}"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("measurement vector contains non-finite entries"));
        }
        let rank_floor = self.sigma_max() * f64::EPSILON * self.rows.max(self.cols) as f64;
        let mut x = vec![0.0; self.cols];
        for (k, &sigma) in self.sigma.iter().enumerate() {
            if lambda == 0.0 && sigma <= rank_floor {
                continue;
            }
            let coeff: f64 = (0..self.rows).map(|i| self.u[(i, k)] * y[i]).sum();
            let filter = sigma / (sigma * sigma + lambda * lambda);
            let scale = filter * coeff;
            for (j, value) in x.iter_mut().enumerate() {
                *value += scale * self.v_t[(k, j)];
            }
        }
        Ok(x)
    }

    /// Applies [`TikhonovSolver::solve`] to every column of an `M×T`
    /// measurement matrix, producing the `U×T` frame-by-frame reconstruction.
    pub fn solve_frames(&self, y: &Tensor, lambda: f64) -> Result<Tensor> {
        if y.rows() != self.rows {
            return Err(Error::shape(format!(
                "solver expects {} measurement rows, got {}",
                self.rows,
                y.rows()
            )));
        }
        let t_len = y.cols();
        let mut out = Tensor::zeros(&[self.cols, t_len]);
        let mut frame = vec![0.0; self.rows];
        for t in 0..t_len {
            for (i, slot) in frame.iter_mut().enumerate() {
                *slot = y.get(i, t);
            }
            let x = self.solve(&frame, lambda)?;
            for (j, value) in x.iter().enumerate() {
                out.set(j, t, *value);
            }
        }
        Ok(out)
    }
}

/// One-shot Tikhonov solve for a single measurement frame.
///
/// Factorizes `h` on every call; batch work should hold a [`TikhonovSolver`].
pub fn tikhonov(h: &Tensor, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    TikhonovSolver::new(h)?.solve(y, lambda)
}

/// Greensite temporal-whitening reconstruction of an `M×T` measurement
/// matrix into a `U×T` potential matrix.
///
/// The measurement matrix is factorized as `Y = A·S·Bᵀ`; the temporal rank
/// `r` is the smallest prefix whose squared singular values reach
/// `energy_threshold` of the total; each of the first `r` whitened columns
/// `(Y·B)_k` is solved independently by Tikhonov with `λ = lambda_rel·σ_max(H)`;
/// and the solutions are rotated back, `X̂ = X̃·B_{:,1..r}ᵀ`.
pub fn greensite(h: &Tensor, y: &Tensor, config: &RegularizerConfig) -> Result<Tensor> {
    config.validate()?;
    let solver = TikhonovSolver::new(h)?;
    if y.rows() != solver.rows() {
        return Err(Error::shape(format!(
            "transfer has {} measurement rows, data has {}",
            solver.rows(),
            y.rows()
        )));
    }
    let t_len = y.cols();
    if t_len == 0 {
        return Err(Error::shape("measurement matrix must have at least one frame"));
    }
    let lambda = config.lambda_rel * solver.sigma_max();

    let y_dm = DMatrix::from_row_iterator(y.rows(), t_len, y.as_slice().iter().copied());
    let svd = y_dm.clone().svd(true, true);
    let (mut a, mut b_t) = (svd.u.expect("left factors"), svd.v_t.expect("right factors"));
    fix_signs(&mut a, &mut b_t);

    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut rank = 0;
    if total > 0.0 {
        let mut cumulative = 0.0;
        for s in svd.singular_values.iter() {
            cumulative += s * s;
            rank += 1;
            if cumulative >= config.energy_threshold * total {
                break;
            }
        }
    }

    let mut out = Tensor::zeros(&[solver.cols(), t_len]);
    if rank == 0 {
        return Ok(out);
    }
    let whitened = y_dm * b_t.rows(0, rank).transpose();
    let mut column = vec![0.0; solver.rows()];
    for k in 0..rank {
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = whitened[(i, k)];
        }
        let x = solver.solve(&column, lambda)?;
        for (j, value) in x.iter().enumerate() {
            let row = out.row_mut(j);
            for (t, slot) in row.iter_mut().enumerate() {
                *slot += value * b_t[(k, t)];
            }
        }
    }
    Ok(out)
}

/// Forces the largest-magnitude entry of each right singular vector positive,
/// flipping the paired left vector to keep the product unchanged.
fn fix_signs(u: &mut DMatrix<f64>, v_t: &mut DMatrix<f64>) {
    for k in 0..v_t.nrows() {
        let mut lead = 0;
        for j in 1..v_t.ncols() {
            if v_t[(k, j)].abs() > v_t[(k, lead)].abs() {
                lead = j;
            }
        }
        if v_t[(k, lead)] < 0.0 {
            for j in 0..v_t.ncols() {
                v_t[(k, j)] = -v_t[(k, j)];
            }
            if k < u.ncols() {
                for i in 0..u.nrows() {
                    u[(i, k)] = -u[(i, k)];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream, StreamKind};

    /// Independent oracle: solve the regularized normal equations
    /// `(HᵀH + λ²I)x = Hᵀy` directly with an LU factorization.
    fn normal_equations(h: &Tensor, y: &[f64], lambda: f64) -> Vec<f64> {
        let (m, u) = (h.rows(), h.cols());
        let dm = DMatrix::from_row_iterator(m, u, h.as_slice().iter().copied());
        let lhs = dm.transpose() * &dm + DMatrix::identity(u, u) * (lambda * lambda);
        let rhs = dm.transpose() * DMatrix::from_column_slice(m, 1, y);
        let x = lhs.lu().solve(&rhs).expect("regularized system is invertible");
        x.iter().copied().collect()
    }

    fn random_matrix(rows: usize, cols: usize, index: u64) -> Tensor {
        let mut rng = stream(907, StreamKind::Diagnostics, index);
        let mut data = vec![0.0; rows * cols];
        crate::rng::fill_standard_normal(&mut rng, &mut data);
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    fn random_vector(len: usize, index: u64) -> Vec<f64> {
        let mut rng = stream(911, StreamKind::Diagnostics, index);
        let mut data = vec![0.0; len];
        crate::rng::fill_standard_normal(&mut rng, &mut data);
        data
    }

    #[test]
    fn identity_with_zero_lambda_is_exact() {
        let h = Tensor::new(
            vec![4, 4],
            vec![
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        let y = [0.3, -1.2, 0.0, 2.5];
        let x = tikhonov(&h, &y, 0.0).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-12, "{xi} vs {yi}");
        }
    }

    #[test]
    fn huge_lambda_shrinks_solution_toward_zero() {
        let h = random_matrix(6, 10, 0);
        let y = random_vector(6, 0);
        let solver = TikhonovSolver::new(&h).unwrap();
        let x = solver.solve(&y, 1e9 * solver.sigma_max()).unwrap();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(x_norm < 1e-6 * y_norm, "‖x̂‖ = {x_norm}, ‖y‖ = {y_norm}");
    }

    #[test]
    fn matches_normal_equations_on_random_system() {
        let h = random_matrix(6, 10, 1);
        let y = random_vector(6, 1);
        let x = tikhonov(&h, &y, 0.1).unwrap();
        let oracle = normal_equations(&h, &y, 0.1);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_lambda_on_rank_deficient_matrix_is_minimum_norm() {
        // Duplicate a column so the matrix is exactly rank-deficient; the
        // λ=0 solve must match nalgebra's pseudo-inverse route.
        let mut h = random_matrix(5, 6, 2);
        for i in 0..5 {
            let v = h.get(i, 0);
            h.set(i, 3, v);
        }
        let y = random_vector(5, 2);
        let x = tikhonov(&h, &y, 0.0).unwrap();
        let dm = DMatrix::from_row_iterator(5, 6, h.as_slice().iter().copied());
        let pinv = dm.pseudo_inverse(1e-10).expect("pseudo-inverse");
        let oracle = pinv * DMatrix::from_column_slice(5, 1, &y);
        for (a, b) in x.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn solution_is_linear_in_measurements() {
        let h = random_matrix(6, 10, 3);
        let solver = TikhonovSolver::new(&h).unwrap();
        let y1 = random_vector(6, 3);
        let y2 = random_vector(6, 4);
        let combined: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 0.7 * a - 1.3 * b).collect();
        let x1 = solver.solve(&y1, 0.05).unwrap();
        let x2 = solver.solve(&y2, 0.05).unwrap();
        let xc = solver.solve(&combined, 0.05).unwrap();
        for ((a, b), c) in x1.iter().zip(&x2).zip(&xc) {
            assert!((0.7 * a - 1.3 * b - c).abs() < 1e-10);
        }
    }

    #[test]
    fn growing_lambda_monotonically_shrinks_solution() {
        let h = random_matrix(6, 10, 5);
        let y = random_vector(6, 5);
        let solver = TikhonovSolver::new(&h).unwrap();
        let norms: Vec<f64> = [0.0, 0.01, 0.1, 1.0, 10.0]
            .iter()
            .map(|&lambda| {
                let x = solver.solve(&y, lambda).unwrap();
                x.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        for pair in norms.windows(2) {
            assert!(pair[1] < pair[0], "norms not decreasing: {norms:?}");
        }
    }

    #[test]
    fn greensite_single_frame_matches_tikhonov() {
        let h = random_matrix(6, 10, 6);
        let y = random_vector(6, 6);
        let config = RegularizerConfig::default();
        let solver = TikhonovSolver::new(&h).unwrap();
        let direct = solver
            .solve(&y, config.lambda_rel * solver.sigma_max())
            .unwrap();
        let frames = Tensor::new(vec![6, 1], y.clone()).unwrap();
        let via_greensite = greensite(&h, &frames, &config).unwrap();
        for (j, d) in direct.iter().enumerate() {
            let g = via_greensite.get(j, 0);
            assert!((g - d).abs() < 1e-10, "node {j}: {g} vs {d}");
        }
    }

    #[test]
    fn greensite_recovers_rank_one_dynamics_as_lambda_vanishes() {
        let h = random_matrix(6, 10, 7);
        let spatial = random_vector(10, 7);
        let course = random_vector(12, 8);
        let mut x_true = Tensor::zeros(&[10, 12]);
        for (j, s) in spatial.iter().enumerate() {
            for (t, c) in course.iter().enumerate() {
                x_true.set(j, t, s * c);
            }
        }
        let h_dm = DMatrix::from_row_iterator(6, 10, h.as_slice().iter().copied());
        let x_dm = DMatrix::from_row_iterator(10, 12, x_true.as_slice().iter().copied());
        let y_dm = &h_dm * &x_dm;
        let y = Tensor::new(vec![6, 12], y_dm.transpose().iter().copied().collect()).unwrap();

        let mut previous = f64::INFINITY;
        for lambda_rel in [1e-1, 1e-3, 1e-6] {
            let config = RegularizerConfig {
                lambda_rel,
                energy_threshold: 1.0,
            };
            let x_hat = greensite(&h, &y, &config).unwrap();
            let x_hat_dm =
                DMatrix::from_row_iterator(10, 12, x_hat.as_slice().iter().copied());
            let residual = (&h_dm * x_hat_dm - &y_dm).norm() / y_dm.norm();
            assert!(residual < previous, "residual {residual} did not shrink");
            previous = residual;
        }
        assert!(previous < 1e-8, "final residual {previous}");
    }

    #[test]
    fn greensite_is_equivariant_under_time_rotation() {
        let h = random_matrix(6, 10, 9);
        let y = random_matrix(6, 8, 10);
        let q = {
            let raw = random_matrix(8, 8, 11);
            let dm = DMatrix::from_row_iterator(8, 8, raw.as_slice().iter().copied());
            dm.qr().q()
        };
        let config = RegularizerConfig {
            lambda_rel: 0.05,
            energy_threshold: 1.0,
        };
        let y_dm = DMatrix::from_row_iterator(6, 8, y.as_slice().iter().copied());
        let rotated_dm = &y_dm * &q;
        let rotated =
            Tensor::new(vec![6, 8], rotated_dm.transpose().iter().copied().collect()).unwrap();

        let base = greensite(&h, &y, &config).unwrap();
        let moved = greensite(&h, &rotated, &config).unwrap();
        let moved_dm = DMatrix::from_row_iterator(10, 8, moved.as_slice().iter().copied());
        let undone = moved_dm * q.transpose();
        let base_dm = DMatrix::from_row_iterator(10, 8, base.as_slice().iter().copied());
        assert!(
            (undone - base_dm).norm() < 1e-9,
            "rotation applied and undone changed the reconstruction"
        );
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let h = random_matrix(6, 10, 12);
        let y = random_matrix(6, 15, 13);
        let config = RegularizerConfig::default();
        let first = greensite(&h, &y, &config).unwrap();
        let second = greensite(&h, &y, &config).unwrap();
        assert_eq!(first.as_slice(), second.as_slice());
    }

    #[test]
    fn energy_threshold_truncates_noise_modes() {
        // Strong rank-1 signal plus faint noise: a tight threshold keeps
        // only the dominant mode, so the output is rank-1 too.
        let h = random_matrix(6, 10, 14);
        let spatial = random_vector(10, 14);
        let course = random_vector(9, 15);
        let h_dm = DMatrix::from_row_iterator(6, 10, h.as_slice().iter().copied());
        let mut y = Tensor::zeros(&[6, 9]);
        let mut rng = stream(919, StreamKind::Diagnostics, 0);
        for i in 0..6 {
            for t in 0..9 {
                let signal: f64 = (0..10).map(|j| h_dm[(i, j)] * spatial[j] * course[t]).sum();
                y.set(i, t, signal + 1e-6 * standard_normal(&mut rng));
            }
        }
        let config = RegularizerConfig {
            lambda_rel: 0.01,
            energy_threshold: 0.9,
        };
        let x_hat = greensite(&h, &y, &config).unwrap();
        let x_dm = DMatrix::from_row_iterator(10, 9, x_hat.as_slice().iter().copied());
        let sv = x_dm.svd(false, false).singular_values;
        assert!(sv[0] > 0.0, "reconstruction should be non-trivial");
        for k in 1..sv.len() {
            assert!(
                sv[k] < 1e-12 * sv[0],
                "mode {k} survived truncation: {} vs {}",
                sv[k],
                sv[0]
            );
        }
    }

    #[test]
    fn dimension_and_config_errors_are_reported() {
        let h = random_matrix(6, 10, 16);
        let solver = TikhonovSolver::new(&h).unwrap();
        assert!(solver.solve(&[0.0; 5], 0.1).is_err());
        assert!(solver.solve(&[0.0; 6], -0.1).is_err());
        assert!(solver.solve(&[f64::NAN; 6], 0.1).is_err());

        let bad_rows = Tensor::zeros(&[5, 3]);
        assert!(greensite(&h, &bad_rows, &RegularizerConfig::default()).is_err());
        let no_frames = Tensor::zeros(&[6, 0]);
        assert!(greensite(&h, &no_frames, &RegularizerConfig::default()).is_err());

        let negative = RegularizerConfig {
            lambda_rel: -1.0,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
        let zero_threshold = RegularizerConfig {
            energy_threshold: 0.0,
            ..Default::default()
        };
        assert!(zero_threshold.validate().is_err());
        let over_threshold = RegularizerConfig {
            energy_threshold: 1.5,
            ..Default::default()
        };
        assert!(over_threshold.validate().is_err());
    }
}

//! Numerical checks connecting latent stochasticity to loss-surface
//! geometry: Monte-Carlo expected loss under latent noise, its second-order
//! Taylor surrogate, finite-difference variation proxies of a decoder's loss
//! surface, and an anchored-box two-sample discrepancy between latent clouds.
//!
//! Everything here treats the decoder as a black-box scalar map from latent
//! points to loss values, via [`LatentObjective`]. That keeps the machinery
//! testable on analytically tractable objectives (linear decoders give
//! Gaussian-quadratic closed forms) and reusable on trained networks.

use crate::error::{Error, Result};
use crate::model::Seq2Seq;
use crate::rng::{standard_normal, stream, StreamKind};
use crate::tensor::Tensor;

/// Default finite-difference step for the surface probes.
pub const DEFAULT_PROBE_STEP: f64 = 1e-3;

/// A scalar loss as a function of a latent point.
pub trait LatentObjective {
    /// Latent dimension the objective expects.
    fn dim(&self) -> usize;
    /// Loss at latent point `w`.
    fn loss(&self, w: &[f64]) -> Result<f64>;
}

/// Monte-Carlo estimate of an expectation: mean, standard error, draw count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

/// First- and second-order flatness summary of a loss surface around a set
/// of probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationReport {
    /// Mean over probes and coordinates of `|∂ℓ/∂w_j|`.
    pub mean_abs_grad: f64,
    /// Mean over probes and coordinate pairs of `|∂²ℓ/∂w_{j}∂w_{k}|`.
    pub mean_abs_hess: f64,
    pub probe_count: usize,
    pub fd_step: f64,
    pub model: String,
}

/// Anchored-box two-sample statistic between two point clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyReport {
    /// `max_c |F_P([0,c]) − F_Q([0,c])|` over candidate corners; in [0, 1].
    pub statistic: f64,
    pub corner_count: usize,
    pub p_count: usize,
    pub q_count: usize,
}

/// A probe site: an objective (typically carrying its own target sample)
/// and the latent point to examine.
#[derive(Debug, Clone)]
pub struct LatentProbe<O> {
    pub objective: O,
    pub center: Vec<f64>,
}

/// Scaled quadratic loss around a linear decoder: `g(w) = A·w + b` and
/// `ℓ(w) = Σ_i (x_i − g_i(w))² / s_i`.
///
/// This family is the exactness class of the order-2 Taylor surrogate, which
/// makes it the reference instrument for validating the Monte-Carlo and
/// Taylor paths against each other.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    /// Decoder matrix, `x_dim × w_dim`.
    pub a: Tensor,
    /// Decoder offset, length `x_dim`.
    pub b: Vec<f64>,
    /// Target, length `x_dim`.
    pub x: Vec<f64>,
    /// Per-output variance scales `s_i > 0`.
    pub scales: Vec<f64>,
}

impl QuadraticObjective {
    /// Draws a random, well-conditioned instance: standard-normal decoder
    /// entries, offsets and targets, and variance scales in `[0.5, 2]`.
    pub fn random(x_dim: usize, w_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, StreamKind::Diagnostics, 0);
        let mut entries = vec![0.0; x_dim * w_dim];
        crate::rng::fill_standard_normal(&mut rng, &mut entries);
        let a = Tensor::new(vec![x_dim, w_dim], entries).expect("finite normals");
        let mut b = vec![0.0; x_dim];
        let mut x = vec![0.0; x_dim];
        crate::rng::fill_standard_normal(&mut rng, &mut b);
        crate::rng::fill_standard_normal(&mut rng, &mut x);
        let scales = (0..x_dim)
            .map(|_| 0.5 + 1.5 * rand::Rng::random::<f64>(&mut rng))
            .collect();
        QuadraticObjective { a, b, x, scales }
    }
}

impl LatentObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        let g = self.a.matvec(w)?;
        let mut total = 0.0;
        for i in 0..g.len() {
            let r = self.x[i] - (g[i] + self.b[i]);
            total += r * r / self.scales[i];
        }
        Ok(total)
    }
}

/// Loss surface of a trained decoder with its output variances frozen.
///
/// Decodes the probe center once to capture `log σ_x²`, then treats those
/// scales as constants: `ℓ(w) = Σ (x − g_mean(w))²·e^{−s₀}`. Freezing
/// isolates the geometry of the mean decoder from variance re-estimation.
pub struct FrozenScaleDecoderLoss<'a> {
    model: &'a Seq2Seq,
    theta: &'a [f64],
    x: &'a Tensor,
    inv_scales: Tensor,
}

impl<'a> FrozenScaleDecoderLoss<'a> {
    pub fn new(
        model: &'a Seq2Seq,
        theta: &'a [f64],
        x: &'a Tensor,
        center: &[f64],
    ) -> Result<Self> {
        let reference = model.decode(theta, center)?;
        if x.shape() != reference.mean.shape() {
            return Err(Error::shape(format!(
                "target shape {:?} does not match decoder output {:?}",
                x.shape(),
                reference.mean.shape()
            )));
        }
        let mut inv_scales = reference.log_var;
        inv_scales.map_inplace(|s| (-s).exp());
        Ok(Self {
            model,
            theta,
            x,
            inv_scales,
        })
    }
}

impl LatentObjective for FrozenScaleDecoderLoss<'_> {
    fn dim(&self) -> usize {
        self.model.config().latent_len()
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        let out = self.model.decode(self.theta, w)?;
        let mut total = 0.0;
        for ((x, g), inv) in self
            .x
            .as_slice()
            .iter()
            .zip(out.mean.as_slice())
            .zip(self.inv_scales.as_slice())
        {
            let r = x - g;
            total += r * r * inv;
        }
        Ok(total)
    }
}

/// Monte-Carlo estimate of `E_ε[ℓ(t + σ_t ⊙ ε)]` with `ε ∼ N(0, I)`.
///
/// With `n_samples = 1` the standard error is reported as 0. With `σ_t = 0`
/// every draw evaluates the same point, so the estimate collapses to the
/// pointwise loss with zero error — returned exactly, not via averaging.
pub fn expected_loss_mc(
    objective: &impl LatentObjective,
    t: &[f64],
    sigma_t: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let d = objective.dim();
    if t.len() != d || sigma_t.len() != d {
        return Err(Error::shape(format!(
            "objective over {d} latents, got t of {} and σ_t of {}",
            t.len(),
            sigma_t.len()
        )));
    }
    if n_samples == 0 {
        return Err(Error::invalid("Monte-Carlo estimate needs at least one draw"));
    }
    if sigma_t.iter().all(|s| *s == 0.0) {
        return Ok(McEstimate {
            mean: objective.loss(t)?,
            std_err: 0.0,
            n_samples,
        });
    }
    let mut rng = stream(seed, StreamKind::Diagnostics, 0);
    let mut w = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        for j in 0..d {
            w[j] = t[j] + sigma_t[j] * standard_normal(&mut rng);
        }
        let value = objective.loss(&w)?;
        if !value.is_finite() {
            return Err(Error::numerical("non-finite loss draw in Monte-Carlo estimate"));
        }
        sum += value;
        sum_sq += value * value;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let std_err = if n_samples > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_err,
        n_samples,
    })
}

/// Order-2 Taylor surrogate of the expected loss under isotropic latent
/// noise: `ℓ(t) + ½ Σ_j σ_{t,j}² · ∂²ℓ/∂t_j²`.
///
/// Odd-order terms vanish because `E[ε] = 0`, and off-diagonal second-order
/// terms vanish because `E[ε_j ε_k] = δ_jk`. Second derivatives come from
/// central finite differences with step `h`.
pub fn taylor_expected_loss(
    objective: &impl LatentObjective,
    t: &[f64],
    sigma_t: &[f64],
    h: f64,
) -> Result<f64> {
    let d = objective.dim();
    if t.len() != d || sigma_t.len() != d {
        return Err(Error::shape(format!(
            "objective over {d} latents, got t of {} and σ_t of {}",
            t.len(),
            sigma_t.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let base = objective.loss(t)?;
    let mut total = base;
    let mut point = t.to_vec();
    for j in 0..d {
        if sigma_t[j] == 0.0 {
            continue;
        }
        point[j] = t[j] + h;
        let up = objective.loss(&point)?;
        point[j] = t[j] - h;
        let down = objective.loss(&point)?;
        point[j] = t[j];
        let second = (up - 2.0 * base + down) / (h * h);
        if !second.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite second difference at latent coordinate {j}"
            )));
        }
        total += 0.5 * sigma_t[j] * sigma_t[j] * second;
    }
    Ok(total)
}

/// Finite-difference flatness measurements around a set of probe points.
///
/// Per probe, gradients use central first differences and the full symmetric
/// Hessian uses central second differences (diagonal) and four-point cross
/// differences (off-diagonal). Fewer than 10 probes are rejected: single-
/// sample flatness numbers are too noisy to compare models with.
pub fn variation_proxy<O: LatentObjective>(
    probes: &[LatentProbe<O>],
    h: f64,
    model_id: impl Into<String>,
) -> Result<VariationReport> {
    if probes.len() < 10 {
        return Err(Error::invalid(format!(
            "variation proxy needs at least 10 probe points, got {}",
            probes.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut grad_sum = 0.0;
    let mut grad_count = 0usize;
    let mut hess_sum = 0.0;
    let mut hess_count = 0usize;
    for probe in probes {
        let d = probe.objective.dim();
        if probe.center.len() != d {
            return Err(Error::shape(format!(
                "probe center of {} for {d}-dimensional objective",
                probe.center.len()
            )));
        }
        let center = &probe.center;
        let f = |w: &[f64]| probe.objective.loss(w);
        let base = f(center)?;
        let mut point = center.clone();

        // One sweep caches ℓ(t ± h·e_j) for gradients and diagonal terms.
        let mut up = vec![0.0; d];
        let mut down = vec![0.0; d];
        for j in 0..d {
            point[j] = center[j] + h;
            up[j] = f(&point)?;
            point[j] = center[j] - h;
            down[j] = f(&point)?;
            point[j] = center[j];
            grad_sum += ((up[j] - down[j]) / (2.0 * h)).abs();
            grad_count += 1;
        }
        for j in 0..d {
            let diag = (up[j] - 2.0 * base + down[j]) / (h * h);
            hess_sum += diag.abs();
            hess_count += 1;
            for k in j + 1..d {
                point[j] = center[j] + h;
                point[k] = center[k] + h;
                let pp = f(&point)?;
                point[k] = center[k] - h;
                let pm = f(&point)?;
                point[j] = center[j] - h;
                let mm = f(&point)?;
                point[k] = center[k] + h;
                let mp = f(&point)?;
                point[j] = center[j];
                point[k] = center[k];
                let cross = (pp - pm - mp + mm) / (4.0 * h * h);
                // Off-diagonal pairs appear twice in the coordinate-pair mean.
                hess_sum += 2.0 * cross.abs();
                hess_count += 2;
            }
        }
        if !(grad_sum.is_finite() && hess_sum.is_finite()) {
            return Err(Error::numerical("non-finite finite-difference evaluation in probe"));
        }
    }
    Ok(VariationReport {
        mean_abs_grad: grad_sum / grad_count as f64,
        mean_abs_hess: hess_sum / hess_count as f64,
        probe_count: probes.len(),
        fd_step: h,
        model: model_id.into(),
    })
}

/// Anchored-box discrepancy between two point clouds of equal dimension.
///
/// Both clouds are min-max scaled to `[0,1]` per dimension (over their
/// union), then the statistic is the largest disagreement between the two
/// empirical measures over boxes `[0, c]` anchored at the origin, with
/// corners `c` drawn from the scaled points themselves. In one dimension
/// this is exactly the two-sample Kolmogorov–Smirnov statistic.
pub fn anchored_box_discrepancy(p: &Tensor, q: &Tensor) -> Result<DiscrepancyReport> {
    let d = p.cols();
    if q.cols() != d {
        return Err(Error::shape(format!(
            "dimension mismatch: {d} vs {}",
            q.cols()
        )));
    }
    let (np, nq) = (p.rows(), q.rows());
    if np == 0 || nq == 0 {
        return Err(Error::invalid("anchored-box discrepancy needs non-empty samples"));
    }

    // Min-max scale over the union; a degenerate dimension collapses to 0.5
    // so it never discriminates.
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for source in [p, q] {
        for i in 0..source.rows() {
            for (j, v) in source.row(i).iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
    }
    let scale_row = |row: &[f64]| -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                if hi[j] > lo[j] {
                    (v - lo[j]) / (hi[j] - lo[j])
                } else {
                    0.5
                }
            })
            .collect()
    };
    let scaled_p: Vec<Vec<f64>> = (0..np).map(|i| scale_row(p.row(i))).collect();
    let scaled_q: Vec<Vec<f64>> = (0..nq).map(|i| scale_row(q.row(i))).collect();

    let inside = |point: &[f64], corner: &[f64]| point.iter().zip(corner).all(|(x, c)| x <= c);
    let mut statistic: f64 = 0.0;
    let mut corners = 0;
    for corner in scaled_p.iter().chain(&scaled_q) {
        corners += 1;
        let fp = scaled_p.iter().filter(|pt| inside(pt, corner)).count() as f64 / np as f64;
        let fq = scaled_q.iter().filter(|pt| inside(pt, corner)).count() as f64 / nq as f64;
        statistic = statistic.max((fp - fq).abs());
    }
    Ok(DiscrepancyReport {
        statistic,
        corner_count: corners,
        p_count: np,
        q_count: nq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::fill_standard_normal;

    /// Closed form for the quadratic family: `E[ℓ(t+σ⊙ε)] = ℓ(t) +
    /// Σ_j σ_j²·(AᵀS⁻¹A)_jj`, from expanding the Gaussian quadratic.
    fn closed_form_expected(obj: &QuadraticObjective, t: &[f64], sigma: &[f64]) -> f64 {
        let base = obj.loss(t).unwrap();
        let (x_dim, w_dim) = (obj.a.rows(), obj.a.cols());
        let mut correction = 0.0;
        for j in 0..w_dim {
            let col_sq: f64 = (0..x_dim)
                .map(|i| obj.a.get(i, j) * obj.a.get(i, j) / obj.scales[i])
                .sum();
            correction += sigma[j] * sigma[j] * col_sq;
        }
        base + correction
    }

    fn random_point(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, StreamKind::Diagnostics, 1);
        let mut out = vec![0.0; d];
        fill_standard_normal(&mut rng, &mut out);
        out
    }

    #[test]
    fn zero_spread_mc_is_exact_with_zero_error() {
        let obj = QuadraticObjective::random(5, 3, 11);
        let t = random_point(3, 11);
        let est = expected_loss_mc(&obj, &t, &[0.0; 3], 500, 7).unwrap();
        assert_eq!(est.mean, obj.loss(&t).unwrap());
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn mc_matches_gaussian_quadratic_closed_form() {
        let obj = QuadraticObjective::random(6, 4, 12);
        let t = random_point(4, 12);
        let sigma = [0.3, 0.8, 0.1, 0.5];
        let est = expected_loss_mc(&obj, &t, &sigma, 10_000, 21).unwrap();
        let exact = closed_form_expected(&obj, &t, &sigma);
        assert!(est.std_err > 0.0);
        assert!(
            (est.mean - exact).abs() < 3.0 * est.std_err,
            "MC {} vs closed form {exact} at SE {}",
            est.mean,
            est.std_err
        );
    }

    #[test]
    fn standard_error_scales_like_inverse_sqrt_n() {
        let obj = QuadraticObjective::random(5, 3, 13);
        let t = random_point(3, 13);
        let sigma = [0.5, 0.5, 0.5];
        for trial in 0..3 {
            let small = expected_loss_mc(&obj, &t, &sigma, 2000, 100 + trial).unwrap();
            let large = expected_loss_mc(&obj, &t, &sigma, 4000, 200 + trial).unwrap();
            let ratio = large.std_err / small.std_err;
            assert!(
                (0.6..=0.82).contains(&ratio),
                "trial {trial}: SE ratio {ratio} outside the 1/√2 band"
            );
        }
    }

    #[test]
    fn taylor_reduces_to_pointwise_loss_without_spread() {
        let obj = QuadraticObjective::random(5, 3, 14);
        let t = random_point(3, 14);
        let taylor = taylor_expected_loss(&obj, &t, &[0.0; 3], DEFAULT_PROBE_STEP).unwrap();
        assert_eq!(taylor, obj.loss(&t).unwrap());
    }

    #[test]
    fn taylor_is_exact_on_the_quadratic_family() {
        let obj = QuadraticObjective::random(7, 4, 15);
        let t = random_point(4, 15);
        let sigma = [0.2, 0.9, 0.4, 0.6];
        let taylor = taylor_expected_loss(&obj, &t, &sigma, DEFAULT_PROBE_STEP).unwrap();
        let exact = closed_form_expected(&obj, &t, &sigma);
        assert!(
            (taylor - exact).abs() < 1e-8 * exact.abs().max(1.0),
            "taylor {taylor} vs closed form {exact}"
        );
        let mc = expected_loss_mc(&obj, &t, &sigma, 20_000, 31).unwrap();
        assert!(
            (taylor - mc.mean).abs() < 3.0 * mc.std_err,
            "taylor {taylor} vs MC {} at SE {}",
            mc.mean,
            mc.std_err
        );
    }

    struct CubicObjective;

    impl LatentObjective for CubicObjective {
        fn dim(&self) -> usize {
            1
        }
        fn loss(&self, w: &[f64]) -> Result<f64> {
            Ok(w[0] * w[0] * w[0])
        }
    }

    #[test]
    fn odd_moments_vanish_for_cubic_perturbation() {
        // E[(0+ε)³] = 0 and the order-2 surrogate sees a zero second
        // derivative at the origin — both sides agree at zero.
        let taylor = taylor_expected_loss(&CubicObjective, &[0.0], &[1.0], 1e-3).unwrap();
        assert_eq!(taylor, 0.0);
        let mc = expected_loss_mc(&CubicObjective, &[0.0], &[1.0], 100_000, 41).unwrap();
        assert!(
            mc.mean.abs() < 3.0 * mc.std_err,
            "cubic MC mean {} should vanish within {}",
            mc.mean,
            mc.std_err
        );
    }

    #[test]
    fn constant_decoder_is_flat() {
        let obj = QuadraticObjective {
            a: Tensor::zeros(&[4, 3]),
            b: vec![0.3, -0.2, 0.9, 0.0],
            x: vec![0.1, 0.1, 0.4, -0.5],
            scales: vec![1.0; 4],
        };
        let probes: Vec<LatentProbe<_>> = (0..10)
            .map(|i| LatentProbe {
                objective: obj.clone(),
                center: random_point(3, 50 + i),
            })
            .collect();
        let report = variation_proxy(&probes, DEFAULT_PROBE_STEP, "flat").unwrap();
        assert!(report.mean_abs_grad < 1e-8, "gradient {}", report.mean_abs_grad);
        assert!(report.mean_abs_hess < 1e-6, "hessian {}", report.mean_abs_hess);
        assert_eq!(report.probe_count, 10);
    }

    #[test]
    fn linear_decoder_hessian_matches_closed_form() {
        let obj = QuadraticObjective::random(5, 3, 60);
        let probes: Vec<LatentProbe<_>> = (0..12)
            .map(|i| LatentProbe {
                objective: obj.clone(),
                center: random_point(3, 70 + i),
            })
            .collect();
        let report = variation_proxy(&probes, DEFAULT_PROBE_STEP, "linear").unwrap();

        // Hessian of Σ (x−Aw−b)²/s is the constant 2·AᵀS⁻¹A.
        let (x_dim, w_dim) = (obj.a.rows(), obj.a.cols());
        let mut expected = 0.0;
        for j in 0..w_dim {
            for k in 0..w_dim {
                let entry: f64 = (0..x_dim)
                    .map(|i| 2.0 * obj.a.get(i, j) * obj.a.get(i, k) / obj.scales[i])
                    .sum();
                expected += entry.abs();
            }
        }
        expected /= (w_dim * w_dim) as f64;
        assert!(
            (report.mean_abs_hess - expected).abs() < 1e-4,
            "proxy {} vs closed form {expected}",
            report.mean_abs_hess
        );

        // Gradient check at one probe: ∇ℓ = −2AᵀS⁻¹(x−At−b).
        let t = &probes[0].center;
        let g = obj.a.matvec(t).unwrap();
        let mut grad_expected = 0.0;
        for j in 0..w_dim {
            let val: f64 = (0..x_dim)
                .map(|i| -2.0 * obj.a.get(i, j) * (obj.x[i] - g[i] - obj.b[i]) / obj.scales[i])
                .sum();
            grad_expected += val.abs();
        }
        grad_expected /= w_dim as f64;
        let single = variation_proxy(
            &(0..10)
                .map(|_| LatentProbe {
                    objective: obj.clone(),
                    center: t.clone(),
                })
                .collect::<Vec<_>>(),
            DEFAULT_PROBE_STEP,
            "one-point",
        )
        .unwrap();
        assert!(
            (single.mean_abs_grad - grad_expected).abs() < 1e-6 * grad_expected.max(1.0),
            "proxy {} vs closed form {grad_expected}",
            single.mean_abs_grad
        );
    }

    struct SmoothObjective;

    impl LatentObjective for SmoothObjective {
        fn dim(&self) -> usize {
            2
        }
        fn loss(&self, w: &[f64]) -> Result<f64> {
            Ok((0.3 * (w[0] + 2.0 * w[1])).exp() + w[0].sin() + w[1] * w[1])
        }
    }

    #[test]
    fn halving_the_step_barely_moves_smooth_reports() {
        let probes: Vec<LatentProbe<_>> = (0..10)
            .map(|i| LatentProbe {
                objective: SmoothObjective,
                center: random_point(2, 90 + i),
            })
            .collect();
        let coarse = variation_proxy(&probes, 1e-3, "smooth").unwrap();
        let fine = variation_proxy(&probes, 5e-4, "smooth").unwrap();
        let grad_shift = (coarse.mean_abs_grad - fine.mean_abs_grad).abs() / fine.mean_abs_grad;
        let hess_shift = (coarse.mean_abs_hess - fine.mean_abs_hess).abs() / fine.mean_abs_hess;
        assert!(grad_shift < 0.05, "gradient moved {grad_shift}");
        assert!(hess_shift < 0.05, "hessian moved {hess_shift}");
    }

    #[test]
    fn too_few_probes_are_rejected() {
        let obj = QuadraticObjective::random(4, 2, 61);
        let probes: Vec<LatentProbe<_>> = (0..9)
            .map(|i| LatentProbe {
                objective: obj.clone(),
                center: random_point(2, 100 + i),
            })
            .collect();
        assert!(variation_proxy(&probes, DEFAULT_PROBE_STEP, "few").is_err());
    }

    fn uniform_cloud(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
        let mut rng = stream(seed, StreamKind::Diagnostics, 2);
        let data: Vec<f64> = (0..n * d)
            .map(|_| lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng))
            .collect();
        Tensor::new(vec![n, d], data).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_discrepancy() {
        let p = uniform_cloud(40, 3, 0.0, 1.0, 300);
        let report = anchored_box_discrepancy(&p, &p).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.corner_count, 80);
    }

    #[test]
    fn one_dimension_reduces_to_kolmogorov_smirnov() {
        let p = uniform_cloud(50, 1, 0.0, 1.0, 301);
        let q = uniform_cloud(50, 1, 0.2, 1.3, 302);
        let report = anchored_box_discrepancy(&p, &q).unwrap();

        // Direct ECDF-difference oracle on the raw values.
        let pv: Vec<f64> = p.as_slice().to_vec();
        let qv: Vec<f64> = q.as_slice().to_vec();
        let mut ks: f64 = 0.0;
        for c in pv.iter().chain(&qv) {
            let fp = pv.iter().filter(|v| *v <= c).count() as f64 / pv.len() as f64;
            let fq = qv.iter().filter(|v| *v <= c).count() as f64 / qv.len() as f64;
            ks = ks.max((fp - fq).abs());
        }
        assert!(
            (report.statistic - ks).abs() < 1e-12,
            "anchored-box {} vs KS {ks}",
            report.statistic
        );
    }

    #[test]
    fn separated_supports_saturate_the_statistic() {
        let p = uniform_cloud(200, 2, 0.0, 0.5, 303);
        let q = uniform_cloud(200, 2, 0.5, 1.0, 304);
        let report = anchored_box_discrepancy(&p, &q).unwrap();
        assert!(report.statistic > 0.99, "statistic {}", report.statistic);
    }

    #[test]
    fn discrepancy_is_symmetric_and_bounded() {
        let p = uniform_cloud(30, 4, 0.0, 1.0, 305);
        let q = uniform_cloud(45, 4, 0.3, 0.9, 306);
        let pq = anchored_box_discrepancy(&p, &q).unwrap();
        let qp = anchored_box_discrepancy(&q, &p).unwrap();
        assert_eq!(pq.statistic, qp.statistic);
        assert!((0.0..=1.0).contains(&pq.statistic));
        assert_eq!(pq.p_count, 30);
        assert_eq!(pq.q_count, 45);
    }

    #[test]
    fn empty_and_mismatched_inputs_are_rejected() {
        let p = uniform_cloud(10, 2, 0.0, 1.0, 307);
        let q3 = uniform_cloud(10, 3, 0.0, 1.0, 308);
        assert!(anchored_box_discrepancy(&p, &q3).is_err());
        let empty = Tensor::zeros(&[0, 2]);
        assert!(anchored_box_discrepancy(&p, &empty).is_err());
    }

    #[test]
    fn frozen_scale_decoder_loss_probes_a_real_model() {
        use crate::model::{ModelConfig, ModelVariant};
        let config = ModelConfig {
            variant: ModelVariant::SvsStochastic,
            input_dim: 3,
            output_dim: 4,
            seq_len: 5,
            encoder_hidden: [4, 3],
            latent_dim: 2,
            mc_samples: 1,
        };
        let model = Seq2Seq::new(config).unwrap();
        let theta = model.init_params(17);
        let x = Tensor::filled(&[4, 5], 0.25);
        let center = [0.1, -0.2];
        let obj = FrozenScaleDecoderLoss::new(&model, &theta, &x, &center).unwrap();
        assert_eq!(obj.dim(), 2);
        let at_center = obj.loss(&center).unwrap();
        assert!(at_center.is_finite() && at_center >= 0.0);
        // Moving in latent space changes the loss (decoder is not constant).
        let elsewhere = obj.loss(&[1.4, 0.9]).unwrap();
        assert_ne!(at_center, elsewhere);
    }
}

//! Fully connected layer `y = W·x + b`.

use crate::tensor::{axpy, dot};

use super::{LayoutBuilder, ParamRef};

/// A dense layer's parameter handles and dimensions.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    /// Weight matrix, `out_dim × in_dim`.
    pub w: ParamRef,
    /// Bias vector, `out_dim`.
    pub b: ParamRef,
    /// Input width.
    pub in_dim: usize,
    /// Output width.
    pub out_dim: usize,
}

impl Dense {
    /// Registers `name.w` and `name.b` in the layout.
    pub fn register(builder: &mut LayoutBuilder, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            w: builder.matrix(format!("{name}.w"), out_dim, in_dim),
            b: builder.vector(format!("{name}.b"), out_dim),
            in_dim,
            out_dim,
        }
    }

    /// `y = W·x + b`.
    pub fn forward(&self, theta: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        let b = self.b.of(theta);
        for r in 0..self.out_dim {
            y[r] = dot(self.w.row(theta, r), x) + b[r];
        }
    }

    /// Accumulates exact gradients of the forward map:
    /// `grad_W += grad_y ⊗ x`, `grad_b += grad_y`, `grad_x += Wᵀ·grad_y`.
    pub fn backward(
        &self,
        theta: &[f64],
        x: &[f64],
        grad_y: &[f64],
        grad_theta: &mut [f64],
        grad_x: &mut [f64],
    ) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(grad_y.len(), self.out_dim);
        debug_assert_eq!(grad_x.len(), self.in_dim);
        for r in 0..self.out_dim {
            let gy = grad_y[r];
            if gy != 0.0 {
                axpy(gy, x, self.w.row_mut(grad_theta, r));
                axpy(gy, self.w.row(theta, r), grad_x);
            }
        }
        for (gb, &gy) in self.b.of_mut(grad_theta).iter_mut().zip(grad_y) {
            *gb += gy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check_all, Layout};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn layer(in_dim: usize, out_dim: usize) -> (Dense, Layout) {
        let mut b = Layout::builder();
        let d = Dense::register(&mut b, "fc", in_dim, out_dim);
        (d, b.finish())
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let (d, layout) = layer(3, 3);
        let mut theta = vec![0.0; layout.total_len()];
        for i in 0..3 {
            theta[d.w.offset() + i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 3.0];
        let mut y = [0.0; 3];
        d.forward(&theta, &x, &mut y);
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_zero_weight_gradient() {
        let (d, layout) = layer(4, 2);
        let theta = vec![0.3; layout.total_len()];
        let mut grad_theta = vec![0.0; layout.total_len()];
        let mut grad_x = vec![0.0; 4];
        d.backward(&theta, &[0.0; 4], &[1.0, -2.0], &mut grad_theta, &mut grad_x);
        assert!(d.w.of(&grad_theta).iter().all(|&g| g == 0.0));
        assert_eq!(d.b.of(&grad_theta), &[1.0, -2.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Pack parameters and the input into one flat vector so the check
        // covers grad_W, grad_b, and grad_x together.
        let (d, layout) = layer(3, 4);
        let n_params = layout.total_len();
        let mut rng = crate::rng::stream(2, crate::rng::StreamKind::Diagnostics, 0);
        let flat: Vec<f64> = (0..n_params + 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let f = |v: &[f64]| {
            let mut y = [0.0; 4];
            d.forward(&v[..n_params], &v[n_params..], &mut y);
            dot(&y, &c)
        };
        let mut analytic = vec![0.0; n_params + 3];
        {
            let (gt, gx) = analytic.split_at_mut(n_params);
            d.backward(&flat[..n_params], &flat[n_params..], &c, gt, gx);
        }
        let report = grad_check_all(f, &flat, &analytic).unwrap();
        assert!(report < 1e-6, "max relative error {report}");
    }

    #[test]
    fn backward_accumulates_instead_of_overwriting() {
        let (d, layout) = layer(2, 2);
        let theta = vec![1.0; layout.total_len()];
        let mut grad_theta = vec![0.0; layout.total_len()];
        let mut grad_x = vec![0.0; 2];
        let x = [1.0, 2.0];
        d.backward(&theta, &x, &[1.0, 0.0], &mut grad_theta, &mut grad_x);
        d.backward(&theta, &x, &[1.0, 0.0], &mut grad_theta, &mut grad_x);
        assert_abs_diff_eq!(d.w.of(&grad_theta)[0], 2.0);
        assert_abs_diff_eq!(grad_x[0], 2.0);
    }
}

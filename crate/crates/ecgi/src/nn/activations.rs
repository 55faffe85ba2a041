//! Element-wise nonlinearities.

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = max(0, x)` element-wise.
pub fn relu_forward(x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = xi.max(0.0);
    }
}

/// Accumulates `grad_x += grad_y · 1[x > 0]`.
///
/// The subgradient at exactly 0 is 0 by convention, so a zero input blocks
/// the gradient.
pub fn relu_backward(x: &[f64], grad_y: &[f64], grad_x: &mut [f64]) {
    debug_assert_eq!(x.len(), grad_y.len());
    debug_assert_eq!(x.len(), grad_x.len());
    for ((gx, &xi), &gy) in grad_x.iter_mut().zip(x).zip(grad_y) {
        if xi > 0.0 {
            *gx += gy;
        }
    }
}

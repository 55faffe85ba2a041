//! Adam optimizer on a flat parameter vector.

use crate::error::{Error, Result};

/// Adam state: first/second moment accumulators plus hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    /// First-moment decay, default 0.9.
    pub beta1: f64,
    /// Second-moment decay, default 0.999.
    pub beta2: f64,
    /// Denominator stabilizer, default 1e-8.
    pub eps_hat: f64,
    /// Step size, default 1e-3.
    pub learning_rate: f64,
}

impl AdamState {
    /// Fresh state for `len` parameters with the given learning rate and the
    /// standard decay defaults.
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            learning_rate,
        }
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First-moment accumulator (for checkpointing).
    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    /// Second-moment accumulator (for checkpointing).
    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Rebuilds a state from checkpointed fields.
    pub fn from_parts(
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
        beta1: f64,
        beta2: f64,
        eps_hat: f64,
        learning_rate: f64,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::shape(format!(
                "moment buffers disagree: {} vs {}",
                m.len(),
                v.len()
            )));
        }
        Ok(AdamState {
            m,
            v,
            step,
            beta1,
            beta2,
            eps_hat,
            learning_rate,
        })
    }

    /// One bias-corrected update: `p -= lr·m̂/(√v̂ + eps)`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps_hat);
        }
        Ok(())
    }
}

//! LSTM cell and sequence processing with backpropagation through time.
//!
//! Gate order everywhere is `[input, forget, output, candidate]`:
//!
//! ```text
//! i = σ(W_i x + R_i h_prev + b_i)        f = σ(W_f x + R_f h_prev + b_f)
//! o = σ(W_o x + R_o h_prev + b_o)        g = tanh(W_g x + R_g h_prev + b_g)
//! c = f ⊙ c_prev + i ⊙ g                 h = o ⊙ tanh(c)
//! ```
//!
//! [`lstm_sequence_forward`] runs a whole sequence from a zero initial state
//! and stores every intermediate in flat `[T, hidden]` buffers;
//! [`lstm_sequence_backward`] replays them in reverse for the exact gradient
//! with respect to all parameters and inputs.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot};

use super::activations::sigmoid;
use super::{LayoutBuilder, ParamRef};

/// Number of gates.
pub const GATES: usize = 4;
const GATE_NAMES: [&str; GATES] = ["i", "f", "o", "g"];

/// Parameter handles of one LSTM cell.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellParams {
    /// Input weights per gate, each `hidden × in_dim`.
    pub w: [ParamRef; GATES],
    /// Recurrent weights per gate, each `hidden × hidden`.
    pub r: [ParamRef; GATES],
    /// Biases per gate, each `hidden`.
    pub b: [ParamRef; GATES],
    /// Input width.
    pub in_dim: usize,
    /// Hidden width.
    pub hidden: usize,
}

impl LstmCellParams {
    /// Registers `name.{w,r,b}_{i,f,o,g}` in the layout.
    pub fn register(builder: &mut LayoutBuilder, name: &str, in_dim: usize, hidden: usize) -> Self {
        let mut refs = |kind: &str, rows: usize, cols: usize| {
            core::array::from_fn(|gate| {
                builder.matrix(format!("{name}.{kind}_{}", GATE_NAMES[gate]), rows, cols)
            })
        };
        let w = refs("w", hidden, in_dim);
        let r = refs("r", hidden, hidden);
        let b = core::array::from_fn(|gate| {
            builder.vector(format!("{name}.b_{}", GATE_NAMES[gate]), hidden)
        });
        LstmCellParams {
            w,
            r,
            b,
            in_dim,
            hidden,
        }
    }
}

/// Every intermediate of a sequence forward pass, in `[T, width]` layout.
#[derive(Debug, Clone)]
pub struct LstmSequenceCache {
    t_len: usize,
    in_dim: usize,
    hidden: usize,
    x: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmSequenceCache {
    /// Number of timesteps.
    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Hidden states `[T, hidden]` — the layer's output sequence.
    pub fn outputs(&self) -> &[f64] {
        &self.h
    }

    /// Hidden state of the final step.
    pub fn last_output(&self) -> &[f64] {
        &self.h[(self.t_len - 1) * self.hidden..]
    }
}

fn gate_slices(buf: &[f64], t: usize, width: usize) -> &[f64] {
    &buf[t * width..(t + 1) * width]
}

/// Runs one step given explicit previous state; writes gate activations and
/// the new state into the `t`-th rows of the cache.
fn step_into(
    p: &LstmCellParams,
    theta: &[f64],
    cache: &mut LstmSequenceCache,
    t: usize,
    h_prev: &[f64],
    c_prev: &[f64],
) {
    let hidden = p.hidden;
    let x = &cache.x[t * p.in_dim..(t + 1) * p.in_dim];
    let row = t * hidden;
    for u in 0..hidden {
        let pre = |gate: usize| {
            dot(p.w[gate].row(theta, u), x)
                + dot(p.r[gate].row(theta, u), h_prev)
                + p.b[gate].of(theta)[u]
        };
        let iv = sigmoid(pre(0));
        let fv = sigmoid(pre(1));
        let ov = sigmoid(pre(2));
        let gv = pre(3).tanh();
        let cv = fv * c_prev[u] + iv * gv;
        let tc = cv.tanh();
        cache.i[row + u] = iv;
        cache.f[row + u] = fv;
        cache.o[row + u] = ov;
        cache.g[row + u] = gv;
        cache.c[row + u] = cv;
        cache.tanh_c[row + u] = tc;
        cache.h[row + u] = ov * tc;
    }
}

/// One LSTM step from explicit state. Returns `(h, c)` plus a single-step
/// cache (a length-1 sequence cache) holding the gate activations.
pub fn lstm_cell_forward(
    p: &LstmCellParams,
    theta: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, LstmSequenceCache)> {
    if x.len() != p.in_dim || h_prev.len() != p.hidden || c_prev.len() != p.hidden {
        return Err(Error::shape(format!(
            "lstm cell expects ({}, {}, {}) got ({}, {}, {})",
            p.in_dim,
            p.hidden,
            p.hidden,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut cache = LstmSequenceCache {
        t_len: 1,
        in_dim: p.in_dim,
        hidden: p.hidden,
        x: x.to_vec(),
        i: vec![0.0; p.hidden],
        f: vec![0.0; p.hidden],
        o: vec![0.0; p.hidden],
        g: vec![0.0; p.hidden],
        c: vec![0.0; p.hidden],
        tanh_c: vec![0.0; p.hidden],
        h: vec![0.0; p.hidden],
    };
    step_into(p, theta, &mut cache, 0, h_prev, c_prev);
    Ok((cache.h.clone(), cache.c.clone(), cache))
}

/// Runs the cell over a `[T, in_dim]` sequence from a zero initial state.
pub fn lstm_sequence_forward(
    p: &LstmCellParams,
    theta: &[f64],
    seq: &[f64],
) -> Result<LstmSequenceCache> {
    if seq.is_empty() || seq.len() % p.in_dim != 0 {
        return Err(Error::shape(format!(
            "sequence of {} values is not a multiple of input width {}",
            seq.len(),
            p.in_dim
        )));
    }
    let t_len = seq.len() / p.in_dim;
    let hidden = p.hidden;
    let mut cache = LstmSequenceCache {
        t_len,
        in_dim: p.in_dim,
        hidden,
        x: seq.to_vec(),
        i: vec![0.0; t_len * hidden],
        f: vec![0.0; t_len * hidden],
        o: vec![0.0; t_len * hidden],
        g: vec![0.0; t_len * hidden],
        c: vec![0.0; t_len * hidden],
        tanh_c: vec![0.0; t_len * hidden],
        h: vec![0.0; t_len * hidden],
    };
    let zeros = vec![0.0; hidden];
    for t in 0..t_len {
        if t == 0 {
            step_into(p, theta, &mut cache, 0, &zeros, &zeros);
        } else {
            // Split so the borrow of step t-1 state does not alias row t.
            let (h_prev, c_prev) = {
                let h = gate_slices(&cache.h, t - 1, hidden).to_vec();
                let c = gate_slices(&cache.c, t - 1, hidden).to_vec();
                (h, c)
            };
            step_into(p, theta, &mut cache, t, &h_prev, &c_prev);
        }
    }
    Ok(cache)
}

/// Backpropagation through time over a cached forward pass.
///
/// `grad_h_seq` is the upstream gradient on every hidden state, `[T, hidden]`.
/// Parameter gradients accumulate into `grad_theta`; input gradients
/// accumulate into `grad_x_seq` (`[T, in_dim]`).
pub fn lstm_sequence_backward(
    p: &LstmCellParams,
    theta: &[f64],
    cache: &LstmSequenceCache,
    grad_h_seq: &[f64],
    grad_theta: &mut [f64],
    grad_x_seq: &mut [f64],
) -> Result<()> {
    let (t_len, hidden) = (cache.t_len, cache.hidden);
    if cache.in_dim != p.in_dim || hidden != p.hidden {
        return Err(Error::shape("cache does not belong to this cell"));
    }
    if grad_h_seq.len() != t_len * hidden {
        return Err(Error::shape(format!(
            "upstream gradient has {} values for {t_len} steps of width {hidden}",
            grad_h_seq.len()
        )));
    }
    if grad_x_seq.len() != t_len * p.in_dim {
        return Err(Error::shape(format!(
            "input gradient buffer has {} values, expected {}",
            grad_x_seq.len(),
            t_len * p.in_dim
        )));
    }

    let mut dh_carry = vec![0.0; hidden];
    let mut dc_carry = vec![0.0; hidden];
    let mut da = vec![0.0; GATES * hidden];
    let zeros = vec![0.0; hidden];

    for t in (0..t_len).rev() {
        let row = t * hidden;
        let x = &cache.x[t * p.in_dim..(t + 1) * p.in_dim];
        let h_prev = if t == 0 {
            &zeros[..]
        } else {
            gate_slices(&cache.h, t - 1, hidden)
        };
        let c_prev = if t == 0 {
            &zeros[..]
        } else {
            gate_slices(&cache.c, t - 1, hidden)
        };

        for u in 0..hidden {
            let dh = grad_h_seq[row + u] + dh_carry[u];
            let (iv, fv, ov, gv) = (
                cache.i[row + u],
                cache.f[row + u],
                cache.o[row + u],
                cache.g[row + u],
            );
            let tc = cache.tanh_c[row + u];
            let dc = dh * ov * (1.0 - tc * tc) + dc_carry[u];
            da[u] = dc * gv * iv * (1.0 - iv); // input gate
            da[hidden + u] = dc * c_prev[u] * fv * (1.0 - fv); // forget gate
            da[2 * hidden + u] = dh * tc * ov * (1.0 - ov); // output gate
            da[3 * hidden + u] = dc * iv * (1.0 - gv * gv); // candidate
            dc_carry[u] = dc * fv;
        }

        dh_carry.iter_mut().for_each(|v| *v = 0.0);
        let grad_x = &mut grad_x_seq[t * p.in_dim..(t + 1) * p.in_dim];
        for gate in 0..GATES {
            let da_g = &da[gate * hidden..(gate + 1) * hidden];
            for u in 0..hidden {
                let d = da_g[u];
                if d != 0.0 {
                    axpy(d, x, p.w[gate].row_mut(grad_theta, u));
                    axpy(d, h_prev, p.r[gate].row_mut(grad_theta, u));
                    axpy(d, p.w[gate].row(theta, u), grad_x);
                    axpy(d, p.r[gate].row(theta, u), &mut dh_carry);
                }
            }
            for (gb, &d) in p.b[gate].of_mut(grad_theta).iter_mut().zip(da_g) {
                *gb += d;
            }
        }
    }
    Ok(())
}

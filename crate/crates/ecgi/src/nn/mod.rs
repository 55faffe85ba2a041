//! Minimal neural-network core with hand-written backward passes.
//!
//! There is no autodiff tape. Every layer is a plain function pair — forward
//! computes outputs and caches intermediates, backward turns upstream
//! gradients into parameter and input gradients using the explicitly derived
//! chain rule. The architectures in this crate are small and fixed, so the
//! explicit approach keeps each gradient independently checkable against
//! central finite differences ([`gradcheck`]).
//!
//! All trainable parameters of a model live in one flat `Vec<f64>`. A
//! [`Layout`] records the name, shape, and offset of each parameter tensor
//! inside that vector; layers hold lightweight [`ParamRef`] handles into it.
//! The flat representation makes the optimizer ([`adam`]), checkpointing,
//! and gradient checking one-dimensional problems.
//!
//! Conventions used by every backward pass in this module:
//!
//! * gradient buffers are *accumulated into* (`+=`), never overwritten, so a
//!   parameter used twice collects both contributions; callers zero buffers
//!   once per pass;
//! * subgradients at kinks (ReLU at 0, clamp boundaries) are 0.

pub mod activations;
pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod lstm;

pub use activations::{relu_backward, relu_forward, sigmoid};
pub use adam::AdamState;
pub use dense::Dense;
pub use gradcheck::{grad_check, grad_check_all, grad_check_auto, FD_STEP};
pub use lstm::{
    lstm_cell_forward, lstm_sequence_backward, lstm_sequence_forward, LstmCellParams,
    LstmSequenceCache,
};

use crate::error::{Error, Result};

/// Handle to one parameter tensor inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl ParamRef {
    /// Number of scalars.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    /// True iff the handle is zero-sized (never produced by a builder).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of the tensor (vector length for rank-1 parameters).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Columns (1 for rank-1 parameters).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Offset of the first scalar in the flat vector.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// The tensor's slice of `theta`.
    #[inline]
    pub fn of<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.offset..self.offset + self.len()]
    }

    /// Mutable slice of `theta`.
    #[inline]
    pub fn of_mut<'a>(&self, theta: &'a mut [f64]) -> &'a mut [f64] {
        &mut theta[self.offset..self.offset + self.len()]
    }

    /// Row `r` of a matrix parameter.
    #[inline]
    pub fn row<'a>(&self, theta: &'a [f64], r: usize) -> &'a [f64] {
        debug_assert!(r < self.rows);
        let start = self.offset + r * self.cols;
        &theta[start..start + self.cols]
    }

    /// Mutable row `r` of a matrix parameter.
    #[inline]
    pub fn row_mut<'a>(&self, theta: &'a mut [f64], r: usize) -> &'a mut [f64] {
        debug_assert!(r < self.rows);
        let start = self.offset + r * self.cols;
        &mut theta[start..start + self.cols]
    }
}

/// Name, shape, and position of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    /// Dotted path, e.g. `encoder1.w_f`.
    pub name: String,
    /// Tensor shape; `[rows]` or `[rows, cols]`.
    pub shape: Vec<usize>,
    /// Offset into the flat parameter vector.
    pub offset: usize,
}

impl LayoutEntry {
    /// Number of scalars.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// True iff zero-sized (never produced by a builder).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable description of a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl Layout {
    /// Starts building a layout.
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder {
            entries: Vec::new(),
            total: 0,
        }
    }

    /// Total scalar count of the parameter vector.
    pub fn total_len(&self) -> usize {
        self.total
    }

    /// All entries in registration order.
    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Looks up an entry by name.
    pub fn entry(&self, name: &str) -> Result<&LayoutEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }
}

/// Accumulates parameter registrations into a [`Layout`].
#[derive(Debug)]
pub struct LayoutBuilder {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl LayoutBuilder {
    /// Registers a matrix parameter and returns its handle.
    pub fn matrix(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamRef {
        assert!(rows > 0 && cols > 0, "zero-sized parameter");
        let offset = self.total;
        self.entries.push(LayoutEntry {
            name: name.into(),
            shape: vec![rows, cols],
            offset,
        });
        self.total += rows * cols;
        ParamRef { offset, rows, cols }
    }

    /// Registers a vector parameter and returns its handle.
    pub fn vector(&mut self, name: impl Into<String>, len: usize) -> ParamRef {
        assert!(len > 0, "zero-sized parameter");
        let offset = self.total;
        self.entries.push(LayoutEntry {
            name: name.into(),
            shape: vec![len],
            offset,
        });
        self.total += len;
        ParamRef {
            offset,
            rows: len,
            cols: 1,
        }
    }

    /// Finishes the layout.
    pub fn finish(self) -> Layout {
        Layout {
            entries: self.entries,
            total: self.total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut b = Layout::builder();
        let w = b.matrix("w", 3, 4);
        let bias = b.vector("b", 3);
        let layout = b.finish();
        assert_eq!(w.offset(), 0);
        assert_eq!(w.len(), 12);
        assert_eq!(bias.offset(), 12);
        assert_eq!(layout.total_len(), 15);
        assert_eq!(layout.entry("b").unwrap().shape, vec![3]);
        assert!(layout.entry("missing").is_err());
    }

    #[test]
    fn param_views_select_rows() {
        let mut b = Layout::builder();
        let w = b.matrix("w", 2, 3);
        let layout = b.finish();
        let theta: Vec<f64> = (0..layout.total_len()).map(|i| i as f64).collect();
        assert_eq!(w.row(&theta, 0), &[0.0, 1.0, 2.0]);
        assert_eq!(w.row(&theta, 1), &[3.0, 4.0, 5.0]);
    }
}

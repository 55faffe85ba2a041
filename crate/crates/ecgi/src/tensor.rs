//! Dense 64-bit tensors in row-major order.
//!
//! [`Tensor`] is deliberately minimal: contiguous `f64` storage plus the
//! handful of shaped operations the fixed architectures in this crate need.
//! There is no broadcasting, no views, no lazy evaluation — hot paths in the
//! network code work on raw slices obtained through [`Tensor::as_slice`] and
//! the free helpers [`dot`] and [`axpy`].

use crate::error::{Error, Result};

/// A dense tensor: a shape and row-major contiguous 64-bit data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Creates a tensor from explicit shape and data.
    ///
    /// Fails when the data length does not match the shape product or when
    /// any entry is non-finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        if data.len() != expected {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        let tensor = Tensor { shape, data };
        tensor.validate_finite()?;
        Ok(tensor)
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Constant-filled tensor of the given shape.
    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// The shape vector.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Whether the tensor has zero entries (never true for valid shapes).
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows; panics unless the tensor is rank 2.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on rank-{} tensor", self.shape.len());
        self.shape[0]
    }

    /// Number of columns; panics unless the tensor is rank 2.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on rank-{} tensor", self.shape.len());
        self.shape[1]
    }

    /// Element access for rank-2 tensors.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Element assignment for rank-2 tensors.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c] = value;
    }

    /// Row `r` of a rank-2 tensor as a contiguous slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    /// Mutable row access.
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    /// Raw data slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable raw data slice.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Consumes the tensor, returning its data.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Matrix–vector product of a rank-2 tensor with a slice.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = (self.rows(), self.cols());
        if x.len() != n {
            return Err(Error::shape(format!("matvec: {m}x{n} with vector of {}", x.len())));
        }
        Ok((0..m).map(|r| dot(self.row(r), x)).collect())
    }

    /// Matrix–matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(format!("matmul: {m}x{k} with {k2}x{n}")));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for r in 0..m {
            let lhs = self.row(r);
            let dst = out.row_mut(r);
            for (i, &a) in lhs.iter().enumerate() {
                axpy(a, other.row(i), dst);
            }
        }
        Ok(out)
    }

    /// Transposed copy of a rank-2 tensor.
    pub fn transposed(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[n, m]);
        for r in 0..m {
            for c in 0..n {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Applies `f` to every entry in place.
    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Errors when any entry is NaN or infinite.
    pub fn validate_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numerical(format!(
                "non-finite entry {} at flat index {i} (shape {:?})",
                self.data[i], self.shape
            ))),
        }
    }
}

/// Dot product over equal-length slices.
///
/// Four-lane unrolling keeps the compiler on a vectorizable path; this is the
/// innermost loop of every layer in the crate.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let (x, y) = (&a[i * 4..i * 4 + 4], &b[i * 4..i * 4 + 4]);
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

/// `y += a · x` over equal-length slices.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

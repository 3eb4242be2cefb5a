//! Dense `f64` tensors of rank 1 or 2, row-major.

use std::fmt;

/// Tensor shape: rank 1 (vector) or rank 2 (matrix).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Dims {
    /// Total element count.
    pub fn len(&self) -> usize {
        match *self {
            Dims::Vector(n) => n,
            Dims::Matrix { rows, cols } => rows * cols,
        }
    }

    /// True when the shape holds no elements.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape as a dim list (`[n]` or `[rows, cols]`).
    pub fn as_list(&self) -> Vec<usize> {
        match *self {
            Dims::Vector(n) => vec![n],
            Dims::Matrix { rows, cols } => vec![rows, cols],
        }
    }

    /// Parses a dim list produced by [`Dims::as_list`].
    pub fn from_list(dims: &[usize]) -> Option<Dims> {
        match dims {
            [n] => Some(Dims::Vector(*n)),
            [r, c] => Some(Dims::Matrix { rows: *r, cols: *c }),
            _ => None,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Dims::Vector(n) => write!(f, "[{n}]"),
            Dims::Matrix { rows, cols } => write!(f, "[{rows}, {cols}]"),
        }
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor {
    /// Rank-1 tensor owning `data`.
    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            dims: Dims::Vector(data.len()),
            data,
        }
    }

    /// Rank-2 tensor owning row-major `data`.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        Tensor {
            dims: Dims::Matrix { rows, cols },
            data,
        }
    }

    /// Zero-filled vector of length `n`.
    pub fn zeros_vector(n: usize) -> Tensor {
        Tensor::vector(vec![0.0; n])
    }

    /// Zero-filled `rows x cols` matrix.
    pub fn zeros_matrix(rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, vec![0.0; rows * cols])
    }

    /// Shape of the tensor.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Total element count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when the tensor holds no elements.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major element slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable row-major element slice.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Consumes the tensor, returning its element buffer.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row count (a vector is one row).
    pub fn rows(&self) -> usize {
        match self.dims {
            Dims::Vector(_) => 1,
            Dims::Matrix { rows, .. } => rows,
        }
    }

    /// Column count (a vector's length).
    pub fn cols(&self) -> usize {
        match self.dims {
            Dims::Vector(n) => n,
            Dims::Matrix { cols, .. } => cols,
        }
    }

    /// Row `r` of a matrix as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dot product with a fixed four-accumulator summation order.
///
/// The order is part of the determinism contract: it never varies with
/// thread count or build flags, so results are bitwise-reproducible. The
/// four independent accumulators also let the compiler pipeline the loop.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let n = a.len();
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i + 4 <= n {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut s = (s0 + s1) + (s2 + s3);
    while i < n {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

/// `y[i] += k * x[i]` over the full slices.
#[inline]
pub(crate) fn axpy(y: &mut [f64], k: f64, x: &[f64]) {
    assert_eq!(y.len(), x.len(), "axpy length mismatch");
    for i in 0..y.len() {
        y[i] += k * x[i];
    }
}

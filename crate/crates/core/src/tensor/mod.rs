//! Dense row-major tensors, unfoldings and 3-tensor algebra.
//!
//! Axis numbers are 0-based. Every merged index is mixed-radix with the
//! later-listed axis varying fastest, the same convention used for joint
//! child-edge indices in [`crate::tree`].

mod labeled;
pub mod linalg;
mod three;

pub(crate) use labeled::{Label, Labeled};
pub use linalg::{full_svd, kron, least_squares, pseudo_inverse, spectral_norm, truncated_svd, LeastSquares, SvdResult};
pub use three::ThreeTensor;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// Matrix type used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// A dense tensor with positive axis sizes, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn checked_len(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or(Error::TooLarge { what: "tensor", size: u128::MAX, limit: usize::MAX as u128 })
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Row-major product of an `m x k` and a `k x n` matrix.
pub(crate) fn matmul_row_major(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    // a row-major buffer read column-major is the transpose, so
    // C^T = B^T A^T comes out row-major for C
    let at = DMatrixView::from_slice(a, k, m);
    let bt = DMatrixView::from_slice(b, n, k);
    let ct = bt * at;
    ct.as_slice().to_vec()
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("zero-sized axis in {shape:?}")));
        }
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tensor entries must be finite".into()));
        }
        Ok(DenseTensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        DenseTensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        DenseTensor { shape, data: vec![0.0; len] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        DenseTensor { shape, data: vec![value; len] }
    }

    pub fn scalar(value: f64) -> Self {
        DenseTensor { shape: vec![], data: vec![value] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        DenseTensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| {
            debug_assert!(i < s);
            acc * s + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Same values, new shape with the same number of entries.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        if checked_len(&shape)? != self.data.len() {
            return Err(Error::ShapeMismatch(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(DenseTensor { shape, data: self.data.clone() })
    }

    /// Axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.shape.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::AxisSpec(format!("{perm:?} is not a permutation of {n} axes")));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let old_strides = self.strides();
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; n];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            // odometer increment tracking the source offset
            for a in (0..n).rev() {
                idx[a] += 1;
                off += strides[a];
                if idx[a] < shape[a] {
                    break;
                }
                off -= strides[a] * shape[a];
                idx[a] = 0;
            }
        }
        Ok(DenseTensor { shape, data })
    }

    /// Unfolding matrix with merged `row_axes` as rows and merged `col_axes`
    /// as columns. Within each group the last-listed axis is fastest.
    pub fn unfold(&self, row_axes: &[usize], col_axes: &[usize]) -> Result<Matrix> {
        let perm = self.grouping(row_axes, col_axes)?;
        let rows: usize = row_axes.iter().map(|&a| self.shape[a]).product();
        let cols: usize = col_axes.iter().map(|&a| self.shape[a]).product();
        let p = self.permuted(&perm)?;
        Ok(Matrix::from_row_slice(rows, cols, &p.data))
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, shape: &[usize], row_axes: &[usize], col_axes: &[usize]) -> Result<Self> {
        let probe = DenseTensor::zeros(shape.to_vec());
        let perm = probe.grouping(row_axes, col_axes)?;
        let grouped_shape: Vec<usize> = perm.iter().map(|&a| shape[a]).collect();
        if m.nrows() * m.ncols() != probe.len() {
            return Err(Error::ShapeMismatch("matrix size does not match tensor shape".into()));
        }
        let data: Vec<f64> = m.transpose().as_slice().to_vec();
        let grouped = DenseTensor { shape: grouped_shape, data };
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        grouped.permuted(&inverse)
    }

    fn grouping(&self, row_axes: &[usize], col_axes: &[usize]) -> Result<Vec<usize>> {
        let n = self.shape.len();
        let mut seen = vec![false; n];
        for &a in row_axes.iter().chain(col_axes) {
            if a >= n {
                return Err(Error::AxisSpec(format!("axis {a} out of range for {n} axes")));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::AxisSpec(format!("axis {a} listed twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::AxisSpec("row and column axes do not cover every axis".into()));
        }
        Ok(row_axes.iter().chain(col_axes).copied().collect())
    }

    /// Sums out every axis not in `keep`; the result's axes follow `keep`'s order.
    pub fn marginal(&self, keep: &[usize]) -> Result<Self> {
        let n = self.shape.len();
        let rest: Vec<usize> = (0..n).filter(|a| !keep.contains(a)).collect();
        let mut perm = keep.to_vec();
        perm.extend(&rest);
        let p = self.permuted(&perm)?;
        let shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let outer: usize = shape.iter().product();
        let inner = p.len() / outer;
        let data = p.data.chunks(inner).map(|c| c.iter().sum()).collect();
        Ok(DenseTensor { shape, data })
    }
}

/// Odometer increment of a multi-index, last axis fastest.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for a in (0..shape.len()).rev() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            return;
        }
        idx[a] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(shape, |_| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn unfold_places_last_entry_last() {
        let t = DenseTensor::from_fn(vec![2, 3, 4], |i| (100 * i[0] + 10 * i[1] + i[2]) as f64);
        let m = t.unfold(&[0], &[1, 2]).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 12));
        assert_eq!(m[(1, 11)], 123.0);
        assert_eq!(m[(0, 5)], t.get(&[0, 1, 1]));
        let v = t.unfold(&[0, 1, 2], &[]).unwrap();
        assert_eq!((v.nrows(), v.ncols()), (24, 1));
    }

    #[test]
    fn unfold_matches_index_arithmetic_and_refolds() {
        let t = random(vec![2, 2, 2], 3);
        let m = t.unfold(&[2], &[0, 1]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert_eq!(m[(c, a * 2 + b)], t.get(&[a, b, c]));
                }
            }
        }
        let back = DenseTensor::fold(&m, &[2, 2, 2], &[2], &[0, 1]).unwrap();
        assert_eq!(back, t);
        let t = random(vec![3, 2, 4, 2], 4);
        let m = t.unfold(&[3, 0], &[2, 1]).unwrap();
        assert_eq!(DenseTensor::fold(&m, &[3, 2, 4, 2], &[3, 0], &[2, 1]).unwrap(), t);
    }

    #[test]
    fn bad_axis_lists_rejected() {
        let t = DenseTensor::zeros(vec![2, 3]);
        assert!(matches!(t.unfold(&[0], &[0]), Err(Error::AxisSpec(_))));
        assert!(matches!(t.unfold(&[0], &[]), Err(Error::AxisSpec(_))));
        assert!(matches!(t.unfold(&[0], &[2]), Err(Error::AxisSpec(_))));
    }

    #[test]
    fn marginal_and_permute() {
        let t = random(vec![2, 3, 4], 5);
        let m = t.marginal(&[2, 0]).unwrap();
        assert_eq!(m.shape(), &[4, 2]);
        let direct: f64 = (0..3).map(|j| t.get(&[1, j, 3])).sum();
        assert!((m.get(&[3, 1]) - direct).abs() < 1e-15);
        let p = t.permuted(&[1, 2, 0]).unwrap();
        assert_eq!(p.get(&[2, 3, 1]), t.get(&[1, 2, 3]));
    }

    #[test]
    fn row_major_matmul() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        assert_eq!(matmul_row_major(&a, 2, 3, &b, 2), vec![4.0, 5.0, 10.0, 11.0]);
    }
}

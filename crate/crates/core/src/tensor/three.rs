use nalgebra::DMatrix;

use super::{linalg::spectral_norm, Matrix};
use crate::error::{Error, Result};

/// A tensor with axes (r1, n, r2), row-major. The middle axis indexes slices.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeTensor {
    r1: usize,
    n: usize,
    r2: usize,
    data: Vec<f64>,
}

impl ThreeTensor {
    pub fn new(r1: usize, n: usize, r2: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != r1 * n * r2 {
            return Err(Error::ShapeMismatch(format!(
                "3-tensor ({r1}, {n}, {r2}) needs {} values, got {}",
                r1 * n * r2,
                data.len()
            )));
        }
        Ok(ThreeTensor { r1, n, r2, data })
    }

    pub fn zeros(r1: usize, n: usize, r2: usize) -> Self {
        ThreeTensor { r1, n, r2, data: vec![0.0; r1 * n * r2] }
    }

    pub fn from_fn(r1: usize, n: usize, r2: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(r1 * n * r2);
        for a in 0..r1 {
            for x in 0..n {
                for b in 0..r2 {
                    data.push(f(a, x, b));
                }
            }
        }
        ThreeTensor { r1, n, r2, data }
    }

    /// Builds the tensor whose middle slices are `slices`.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::ShapeMismatch("no slices".into()))?;
        let (r1, r2) = first.shape();
        if slices.iter().any(|s| s.shape() != (r1, r2)) {
            return Err(Error::ShapeMismatch("slices differ in shape".into()));
        }
        Ok(Self::from_fn(r1, slices.len(), r2, |a, x, b| slices[x][(a, b)]))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.r1, self.n, self.r2)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, a: usize, x: usize, b: usize) -> f64 {
        self.data[(a * self.n + x) * self.r2 + b]
    }

    pub fn slice(&self, x: usize) -> Matrix {
        DMatrix::from_fn(self.r1, self.r2, |a, b| self.get(a, x, b))
    }

    /// Unfolding with (r1, n) merged as rows.
    pub fn left_unfolding(&self) -> Matrix {
        Matrix::from_row_slice(self.r1 * self.n, self.r2, &self.data)
    }

    /// Unfolding with (n, r2) merged as columns.
    pub fn right_unfolding(&self) -> Matrix {
        Matrix::from_row_slice(self.r1, self.n * self.r2, &self.data)
    }

    /// `(G∘H)(α, (x, y), γ) = Σ_β G(α, x, β) H(β, y, γ)`, with `y` fastest.
    pub fn circ(&self, other: &ThreeTensor) -> Result<ThreeTensor> {
        if self.r2 != other.r1 {
            return Err(Error::ShapeMismatch(format!(
                "circ inner dimensions {} and {} differ",
                self.r2, other.r1
            )));
        }
        let mut slices = Vec::with_capacity(self.n * other.n);
        let hs: Vec<Matrix> = (0..other.n).map(|y| other.slice(y)).collect();
        for x in 0..self.n {
            let g = self.slice(x);
            for h in &hs {
                slices.push(&g * h);
            }
        }
        ThreeTensor::from_slices(&slices)
    }

    /// `(G⊗H)((α1, α2), (x, y), (β1, β2)) = G(α1, x, β1) H(α2, y, β2)`.
    pub fn otimes(&self, other: &ThreeTensor) -> ThreeTensor {
        let (r1, n1, r2) = self.dims();
        let (r3, n2, r4) = other.dims();
        ThreeTensor::from_fn(r1 * r3, n1 * n2, r2 * r4, |a, xy, b| {
            let (a1, a2) = (a / r3, a % r3);
            let (x, y) = (xy / n2, xy % n2);
            let (b1, b2) = (b / r4, b % r4);
            self.get(a1, x, b1) * other.get(a2, y, b2)
        })
    }

    /// Largest spectral norm over the middle slices.
    pub fn norm(&self) -> f64 {
        (0..self.n).map(|x| spectral_norm(&self.slice(x))).fold(0.0, f64::max)
    }
}

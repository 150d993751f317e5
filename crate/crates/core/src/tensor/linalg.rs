//! SVD-based dense linear algebra with a fixed sign convention and cutoff.

use super::Matrix;
use crate::error::{Error, Result};

/// Relative singular-value cutoff for pseudo-inverses and least squares.
pub const RCOND: f64 = 1e-12;

/// Thin SVD `M = U diag(sigma) Vᵀ` with `sigma` descending.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// One-sided Jacobi on the columns of a tall matrix `a` (rows >= cols).
/// Returns `a V` (orthogonal columns) and `V`.
fn jacobi_columns(mut a: Matrix) -> (Matrix, Matrix) {
    let n = a.ncols();
    let mut v = Matrix::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut a, &mut v] {
                    for i in 0..m.nrows() {
                        let (x, y) = (m[(i, p)], m[(i, q)]);
                        m[(i, p)] = c * x - s * y;
                        m[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

/// Fills zero columns of `u` with unit vectors orthogonal to the others.
fn complete_basis(u: &mut Matrix, filled: &[bool]) {
    let rows = u.nrows();
    let mut e = 0;
    for j in 0..u.ncols() {
        if filled[j] {
            continue;
        }
        while e < rows {
            let mut cand = nalgebra::DVector::<f64>::zeros(rows);
            cand[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for k in 0..u.ncols() {
                    if k != j && (filled[k] || k < j) {
                        let proj = u.column(k).dot(&cand);
                        cand -= u.column(k) * proj;
                    }
                }
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                u.set_column(j, &(cand / norm));
                break;
            }
        }
    }
}

/// Full thin SVD (rank `min(rows, cols)`), sorted and sign-fixed.
pub fn full_svd(m: &Matrix) -> SvdResult {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SvdResult { u: Matrix::zeros(rows, 0), sigma: vec![], v: Matrix::zeros(cols, 0) };
    }
    let tall = rows >= cols;
    let (av, w) = jacobi_columns(if tall { m.clone() } else { m.transpose() });
    let norms: Vec<f64> = (0..k).map(|j| av.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let big_rows = av.nrows();
    let mut left = Matrix::zeros(big_rows, k);
    let mut right = Matrix::zeros(k, k);
    let mut sigma = Vec::with_capacity(k);
    let mut filled = vec![false; k];
    let smax = norms[order[0]];
    for (j, &o) in order.iter().enumerate() {
        let s = norms[o];
        sigma.push(s);
        right.set_column(j, &w.column(o));
        if s > 0.0 && s > f64::EPSILON * smax * 1e-3 {
            left.set_column(j, &(av.column(o) / s));
            filled[j] = true;
        }
    }
    complete_basis(&mut left, &filled);
    let (mut uu, mut vv) = if tall { (left, right) } else { (right, left) };
    for j in 0..k {
        let col = uu.column(j);
        let mut best = 0;
        for i in 1..rows {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if uu[(best, j)] < 0.0 {
            uu.column_mut(j).neg_mut();
            vv.column_mut(j).neg_mut();
        }
    }
    SvdResult { u: uu, sigma, v: vv }
}

/// Best rank-`r` approximation factors.
pub fn truncated_svd(m: &Matrix, r: usize) -> Result<SvdResult> {
    let max = m.nrows().min(m.ncols());
    if r > max {
        return Err(Error::RankTooLarge { node: 0, rank: r, max });
    }
    let full = full_svd(m);
    Ok(SvdResult {
        u: full.u.columns(0, r).into_owned(),
        sigma: full.sigma[..r].to_vec(),
        v: full.v.columns(0, r).into_owned(),
    })
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    full_svd(m).sigma[0]
}

/// Number of singular values above `RCOND * sigma_max`.
fn kept(sigma: &[f64]) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sigma.iter().take_while(|&&s| s > RCOND * smax).count()
}

pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    let svd = full_svd(m);
    let r = kept(&svd.sigma);
    let mut v = svd.v.columns(0, r).into_owned();
    for j in 0..r {
        v.column_mut(j).scale_mut(1.0 / svd.sigma[j]);
    }
    v * svd.u.columns(0, r).transpose()
}

/// Minimum-norm least-squares solution and its conditioning.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub x: Matrix,
    pub effective_rank: usize,
    pub condition: f64,
    pub full_rank: bool,
}

pub fn least_squares(a: &Matrix, b: &Matrix) -> Result<LeastSquares> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "least squares with {} equations but {} right-hand-side rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = full_svd(a);
    let r = kept(&svd.sigma);
    let x = if r == 0 {
        Matrix::zeros(a.ncols(), b.ncols())
    } else {
        let mut utb = svd.u.columns(0, r).transpose() * b;
        for i in 0..r {
            utb.row_mut(i).scale_mut(1.0 / svd.sigma[i]);
        }
        svd.v.columns(0, r) * utb
    };
    let condition = if r == 0 { f64::INFINITY } else { svd.sigma[0] / svd.sigma[r - 1] };
    Ok(LeastSquares { x, effective_rank: r, condition, full_rank: r == a.ncols() })
}

/// Kronecker product, first factor slowest.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

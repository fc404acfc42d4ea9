//! Thin dense linear algebra layer over nalgebra.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending order.
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    SymEigen { values, vectors }
}

pub fn smallest_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Solves `a x = b` for every column of `b`.
pub fn solve(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let lu = a.lu();
    lu.solve(&b).ok_or_else(|| Error::SingularSystem(format!("{n}x{n} system")))
}

pub fn solve_vec(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let x = solve(a, DMatrix::from_column_slice(b.len(), 1, b))?;
    Ok(x.column(0).iter().copied().collect())
}

/// Largest `lambda` with `n v = lambda l v`, `l` positive definite.
/// Returns `None` when `l` is not numerically positive definite.
pub fn max_generalized_eigenvalue(n: &DMatrix<f64>, l: DMatrix<f64>) -> Option<f64> {
    let scale = (0..l.nrows()).map(|i| l[(i, i)].abs()).fold(0.0, f64::max);
    let chol = l.cholesky()?;
    let lower = chol.l();
    let min_pivot = (0..lower.nrows()).map(|i| lower[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > 1e-13 * scale) {
        return None;
    }
    let y = lower.solve_lower_triangular(n)?;
    let m = lower.solve_lower_triangular(&y.transpose())?;
    let m = (&m + m.transpose()) * 0.5;
    Some(m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().copied().collect()
}

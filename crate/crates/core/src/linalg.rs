//! Small dense linear-algebra helpers shared by the builder, solver and
//! region code.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Largest singular value; 0 for an empty matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &s| a.max(s))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &s| a.max(s))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &s| a.min(s))
}

/// Cholesky factor, `None` unless the matrix is numerically positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let dmax = l.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let dmin = l.diagonal().iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if !(dmin > 0.0) || dmin < 1e-12 * dmax {
        return None;
    }
    Some(chol)
}

/// Row rank test by column-pivoted QR of the transpose: full row rank iff
/// every diagonal of R exceeds `rtol` times the largest one.
pub fn full_row_rank(m: &DMatrix<f64>, rtol: f64) -> bool {
    let k = m.nrows();
    if k == 0 {
        return true;
    }
    if k > m.ncols() {
        return false;
    }
    let qr = m.transpose().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().fold(0.0f64, |a, &v| a.max(v));
    top > 0.0 && diag.iter().all(|&v| v > rtol * top)
}

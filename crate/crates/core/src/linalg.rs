//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{NumericalFailure, Result};

/// Extreme eigenvalues of a symmetric matrix.
pub(crate) fn symmetric_spectrum(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if m.nrows() == 0 {
        return Ok((0.0, 0.0));
    }
    let eig = m
        .clone()
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or_else(|| NumericalFailure::new("symmetric eigensolver", 10_000, f64::NAN))?;
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Spectral norm `‖M‖₂` by power iteration on `MᵀM`.
///
/// The start vector is fixed so repeated calls agree bit for bit. Stops when the
/// relative change of the Rayleigh quotient drops below `tol`.
pub fn spectral_norm(m: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    // A slightly irregular start avoids being orthogonal to the top singular vector
    // for the structured matrices seen in tests.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    v /= v.norm();
    let mut sigma2 = 0.0;
    for _ in 0..max_iters {
        let w = m.tr_mul(&(m * &v));
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - sigma2).abs() <= tol * next.abs() {
            sigma2 = next;
            break;
        }
        sigma2 = next;
    }
    sigma2.max(0.0).sqrt()
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Row-major flattening, the layout used in instance documents.
pub(crate) fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

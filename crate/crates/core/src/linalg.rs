//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real 2×2 representation of multiplication by `z` on (Re, Im) pairs:
/// [[Re z, −Im z], [Im z, Re z]].
pub fn embed(z: Complex64) -> Matrix2<f64> {
    Matrix2::new(z.re, -z.im, z.im, z.re)
}

pub(crate) fn block(m: &DMatrix<f64>, j: usize, k: usize) -> Matrix2<f64> {
    m.fixed_view::<2, 2>(2 * j, 2 * k).into_owned()
}

pub(crate) fn set_block(m: &mut DMatrix<f64>, j: usize, k: usize, b: &Matrix2<f64>) {
    m.fixed_view_mut::<2, 2>(2 * j, 2 * k).copy_from(b);
}

/// Ω for `n` modes in interleaved ordering.
pub(crate) fn omega(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        m[(2 * k, 2 * k + 1)] = 1.0;
        m[(2 * k + 1, 2 * k)] = -1.0;
    }
    m
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// Checks that `m` is a 2N×2N matrix and returns N.
pub(crate) fn phase_space_dim(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "{what} has dimension {}, expected a positive even number",
            m.nrows()
        )));
    }
    Ok(m.nrows() / 2)
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    let scale = max_abs(m).max(1.0);
    let asym = max_abs(&(m - m.transpose()));
    if asym > tol * scale {
        return Err(Error::Shape(format!(
            "{what} is not symmetric (max |m - mᵀ| = {asym:e})"
        )));
    }
    Ok(())
}

pub(crate) fn check_len(v: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Shape(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_dims(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Symmetric positive-definite inverse via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Decomposition {
            what: format!("{what} is not positive definite"),
            residual: f64::NAN,
        })
}

/// Block-diagonal direct sum.
pub(crate) fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = DMatrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ModeFamily;
use crate::error::{Error, Result};
use crate::linalg::{embed, set_block};
use crate::tolerance::Tolerances;

/// How the θ-derivatives of the populated modes split into populated modes (D_n)
/// and new orthonormal derivative modes (D_∂).
///
/// ∂u_k = Σ_j c[k, j] u_j + Σ_i c′[k, i] u′_i. Block (k, j) of D_n is
/// embed(conj c[k, j]), block (k, i) of D_∂ is embed(conj c′[k, i]).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCoupling {
    pub dn: DMatrix<f64>,
    pub dpartial: DMatrix<f64>,
    /// Number of derivative modes u′_i.
    pub m: usize,
    /// c[k, j] = (u_j|∂u_k)
    pub c: DMatrix<Complex64>,
    /// c′[k, i] = (u′_i|∂u_k); zero for i past the residual of k.
    pub c_prime: DMatrix<Complex64>,
    /// ‖ũ′_k‖ for every populated mode in elimination order, kept or not.
    pub residuals: Vec<f64>,
    /// Largest deviation of the overlap table from the identity.
    pub ortho_defect: f64,
}

impl DerivativeCoupling {
    /// Builds D_n and D_∂ from coefficient tables of shape n×n and n×m.
    pub fn from_coefficients(c: DMatrix<Complex64>, c_prime: DMatrix<Complex64>) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n || c_prime.nrows() != n {
            return Err(Error::Shape(format!(
                "coefficient tables are {}x{} and {}x{}",
                c.nrows(),
                c.ncols(),
                c_prime.nrows(),
                c_prime.ncols()
            )));
        }
        let m = c_prime.ncols();
        let mut dn = DMatrix::zeros(2 * n, 2 * n);
        let mut dpartial = DMatrix::zeros(2 * n, 2 * m);
        for k in 0..n {
            for j in 0..n {
                set_block(&mut dn, k, j, &embed(c[(k, j)].conj()));
            }
            for i in 0..m {
                set_block(&mut dpartial, k, i, &embed(c_prime[(k, i)].conj()));
            }
        }
        Ok(DerivativeCoupling {
            dn,
            dpartial,
            m,
            residuals: Vec::new(),
            ortho_defect: 0.0,
            c,
            c_prime,
        })
    }

    pub fn populated(&self) -> usize {
        self.c.nrows()
    }
}

pub fn gram_schmidt_derivatives(family: &dyn ModeFamily, theta: f64) -> Result<DerivativeCoupling> {
    gram_schmidt_derivatives_with(family, theta, &Tolerances::default())
}

/// Orthonormalises the residuals ũ′_k = ∂u_k − Σ_j (u_j|∂u_k) u_j in index order.
///
/// Works on coefficient vectors over the residuals, so only the overlap tables are
/// needed. A residual whose norm is at most `tol.rank` adds no derivative mode.
pub fn gram_schmidt_derivatives_with(
    family: &dyn ModeFamily,
    theta: f64,
    tol: &Tolerances,
) -> Result<DerivativeCoupling> {
    let n = family.mode_count();
    if n == 0 {
        return Err(Error::InvalidDimension("mode family has no modes".into()));
    }
    let ov = family.overlaps(theta).map_err(|e| e.at(theta))?;
    ov.check(n)?;
    let ortho_defect = ov.orthonormality_defect();
    if ortho_defect > tol.ortho {
        return Err(Error::Domain(format!(
            "mode family is not orthonormal at theta = {theta} (defect {ortho_defect:e})"
        )));
    }
    let c = ov.derivative.clone();
    // res[k, l] = (ũ′_l|ũ′_k)
    let res = &ov.derivative_gram - &c * c.adjoint();

    let mut alphas: Vec<Vec<Complex64>> = Vec::new();
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for k in 0..n {
        let proj: Vec<Complex64> = alphas
            .iter()
            .map(|a| (0..n).map(|q| a[q].conj() * res[(k, q)]).sum())
            .collect();
        let norm2 = res[(k, k)].re - proj.iter().map(|p| p.norm_sqr()).sum::<f64>();
        let scale = ov.derivative_gram[(k, k)].re.abs().max(1.0);
        if !norm2.is_finite() || norm2 < -tol.rank * scale {
            return Err(Error::NumericalRank(format!(
                "derivative Gram matrix is indefinite at mode {k} (residual norm² {norm2:e})"
            )));
        }
        let norm = norm2.max(0.0).sqrt();
        residuals.push(norm);
        let mut row = proj.clone();
        if norm > tol.rank {
            let mut a = vec![Complex64::new(0.0, 0.0); n];
            a[k] = Complex64::new(1.0, 0.0);
            for (p, prev) in proj.iter().zip(&alphas) {
                for q in 0..n {
                    a[q] -= p * prev[q];
                }
            }
            for x in &mut a {
                *x /= norm;
            }
            alphas.push(a);
            row.push(Complex64::new(norm, 0.0));
        }
        rows.push(row);
    }
    let m = alphas.len();
    let c_prime = DMatrix::from_fn(n, m, |k, i| rows[k].get(i).copied().unwrap_or_default());
    let mut out = DerivativeCoupling::from_coefficients(c, c_prime)?;
    out.residuals = residuals;
    out.ortho_defect = ortho_defect;
    Ok(out)
}

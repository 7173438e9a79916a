//! The symplectic form, physicality checks and the Williamson decomposition.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, max_abs, omega, phase_space_dim};
use crate::tolerance::Tolerances;

/// Ω = ⊕ [[0, 1], [−1, 0]] over N modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    modes: usize,
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

pub fn symplectic_form(n: usize) -> Result<SymplecticForm> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "symplectic form needs at least one mode".into(),
        ));
    }
    Ok(SymplecticForm {
        modes: n,
        matrix: omega(n),
    })
}

/// σ = S (ν ⊗ 1₂) Sᵀ with S symplectic and ν non-increasing.
#[derive(Debug, Clone)]
pub struct WilliamsonDecomposition {
    pub s: DMatrix<f64>,
    pub nu: Vec<f64>,
    /// Indices whose eigenvalue fell in [1 − tol_phys, 1) and was set to 1.
    pub clamped: Vec<usize>,
    /// Relative Frobenius residual of S ν Sᵀ − σ.
    pub recon_residual: f64,
    /// Residual of S Ω Sᵀ − Ω, relative to max(1, max|S|²).
    pub symp_residual: f64,
}

impl WilliamsonDecomposition {
    pub fn modes(&self) -> usize {
        self.nu.len()
    }

    /// S⁻¹ = Ωᵀ Sᵀ Ω, exact for symplectic S.
    pub fn s_inverse(&self) -> DMatrix<f64> {
        let om = omega(self.modes());
        -(&om * self.s.transpose() * &om)
    }

    /// ν ⊗ 1₂ as a diagonal matrix.
    pub fn nu_matrix(&self) -> DMatrix<f64> {
        let d = DVector::from_iterator(2 * self.nu.len(), self.nu.iter().flat_map(|&v| [v, v]));
        DMatrix::from_diagonal(&d)
    }
}

struct Spectrum {
    half: DMatrix<f64>,
    /// (ν, unit eigenvector of i σ^{1/2} Ω σ^{1/2}) sorted by non-increasing ν.
    pairs: Vec<(f64, DVector<Complex64>)>,
}

fn spectrum(sigma: &DMatrix<f64>, tol: &Tolerances) -> Result<Spectrum> {
    let n = phase_space_dim(sigma, "covariance matrix")?;
    check_symmetric(sigma, tol.symm, "covariance matrix")?;
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 || !min_eig.is_finite() {
        return Err(Error::Unphysical { min_nu: 0.0 });
    }
    let root = eig.eigenvalues.map(f64::sqrt);
    let half = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();

    let kp = &half * omega(n) * &half;
    let h = kp.map(|x| Complex64::new(0.0, x));
    let heig = SymmetricEigen::new(h);
    let mut pairs: Vec<(f64, DVector<Complex64>)> = heig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (v, heig.eigenvectors.column(i).into_owned()))
        .collect();
    if pairs.len() != n {
        return Err(Error::Decomposition {
            what: format!(
                "expected {n} positive eigenvalues of iΩσ, found {}",
                pairs.len()
            ),
            residual: f64::NAN,
        });
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    Ok(Spectrum { half, pairs })
}

pub fn is_physical(sigma: &DMatrix<f64>, tol_phys: f64) -> Result<bool> {
    let tol = Tolerances {
        phys: tol_phys,
        ..Tolerances::default()
    };
    match spectrum(sigma, &tol) {
        Ok(sp) => Ok(sp.pairs.last().is_some_and(|p| p.0 >= 1.0 - tol_phys)),
        Err(Error::Unphysical { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn symplectic_eigenvalues(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    symplectic_eigenvalues_with(sigma, &Tolerances::default())
}

pub fn symplectic_eigenvalues_with(sigma: &DMatrix<f64>, tol: &Tolerances) -> Result<Vec<f64>> {
    let sp = spectrum(sigma, tol)?;
    let nu: Vec<f64> = sp.pairs.iter().map(|p| p.0).collect();
    let min_nu = nu.last().copied().unwrap_or(1.0);
    if min_nu < 1.0 - tol.phys {
        return Err(Error::Unphysical { min_nu });
    }
    Ok(nu.into_iter().map(|v| v.max(1.0)).collect())
}

pub fn williamson(sigma: &DMatrix<f64>) -> Result<WilliamsonDecomposition> {
    williamson_with(sigma, &Tolerances::default())
}

pub fn williamson_with(sigma: &DMatrix<f64>, tol: &Tolerances) -> Result<WilliamsonDecomposition> {
    let sp = spectrum(sigma, tol)?;
    let n = sp.pairs.len();
    let min_nu = sp.pairs[n - 1].0;
    if min_nu < 1.0 - tol.phys {
        return Err(Error::Unphysical { min_nu });
    }

    let (nu_raw, vectors) = canonical_eigenvectors(&sp.pairs);

    let mut r = DMatrix::zeros(2 * n, 2 * n);
    let sqrt2 = std::f64::consts::SQRT_2;
    for (k, z) in vectors.iter().enumerate() {
        for i in 0..2 * n {
            r[(i, 2 * k)] = sqrt2 * z[i].im;
            r[(i, 2 * k + 1)] = sqrt2 * z[i].re;
        }
    }
    let mut s = &sp.half * r;
    for (k, &v) in nu_raw.iter().enumerate() {
        let f = 1.0 / v.sqrt();
        s.column_mut(2 * k).scale_mut(f);
        s.column_mut(2 * k + 1).scale_mut(f);
    }

    let mut clamped = Vec::new();
    let nu: Vec<f64> = nu_raw
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v < 1.0 {
                clamped.push(k);
                1.0
            } else {
                v
            }
        })
        .collect();

    let mut dec = WilliamsonDecomposition {
        s,
        nu,
        clamped,
        recon_residual: 0.0,
        symp_residual: 0.0,
    };
    let om = omega(n);
    let recon = &dec.s * dec.nu_matrix() * dec.s.transpose();
    dec.recon_residual = (recon - sigma).norm() / sigma.norm();
    let scale = max_abs(&dec.s).powi(2).max(1.0);
    dec.symp_residual = max_abs(&(&dec.s * &om * dec.s.transpose() - &om)) / scale;
    if dec.symp_residual > tol.symp {
        return Err(Error::Decomposition {
            what: "S is not symplectic".into(),
            residual: dec.symp_residual,
        });
    }
    if dec.recon_residual > tol.recon {
        return Err(Error::Decomposition {
            what: "S ν Sᵀ does not reproduce σ".into(),
            residual: dec.recon_residual,
        });
    }
    Ok(dec)
}

/// Eigenvectors within each (near-)degenerate ν cluster are only defined up to a
/// unitary mix. Fix the gauge by aligning each cluster with the projections of the
/// vacuum eigenvectors (p_k + i q_k)/√2, orthonormalised symmetrically, so that the
/// identity maps to S = 1 and repeated runs give the same S.
fn canonical_eigenvectors(
    pairs: &[(f64, DVector<Complex64>)],
) -> (Vec<f64>, Vec<DVector<Complex64>>) {
    let n = pairs.len();
    let dim = 2 * n;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let refs: Vec<DVector<Complex64>> = (0..n)
        .map(|k| {
            let mut v = DVector::from_element(dim, Complex64::new(0.0, 0.0));
            v[2 * k] = Complex64::new(0.0, inv_sqrt2);
            v[2 * k + 1] = Complex64::new(inv_sqrt2, 0.0);
            v
        })
        .collect();

    let mut nus = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[start].0 - pairs[end].0).abs() <= 1e-10 * pairs[start].0 {
            end += 1;
        }
        let cluster: Vec<&DVector<Complex64>> = pairs[start..end].iter().map(|p| &p.1).collect();
        let d = cluster.len();

        let project = |v: &DVector<Complex64>| {
            let mut p = DVector::from_element(dim, Complex64::new(0.0, 0.0));
            for z in &cluster {
                p += *z * z.dotc(v);
            }
            p
        };
        let mut candidates: Vec<(usize, DVector<Complex64>, f64)> = refs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let p = project(r);
                let norm = p.norm();
                (k, p, norm)
            })
            .collect();
        candidates.sort_by(|a, b| {
            if (a.2 - b.2).abs() <= 1e-12 {
                a.0.cmp(&b.0)
            } else {
                b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal)
            }
        });

        let mut chosen: Vec<(usize, DVector<Complex64>)> = Vec::with_capacity(d);
        let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(d);
        let mut try_add =
            |key: usize, p: DVector<Complex64>, chosen: &mut Vec<(usize, DVector<Complex64>)>| {
                let mut res = p.clone();
                for b in basis.iter() {
                    res -= b * b.dotc(&res);
                }
                let rn = res.norm();
                if rn > 1e-6 {
                    basis.push(res / Complex64::new(rn, 0.0));
                    chosen.push((key, p));
                }
            };
        for (k, p, _) in candidates {
            if chosen.len() == d {
                break;
            }
            try_add(k, p, &mut chosen);
        }
        for (i, z) in cluster.iter().enumerate() {
            if chosen.len() == d {
                break;
            }
            try_add(n + i, (*z).clone(), &mut chosen);
        }
        chosen.sort_by_key(|c| c.0);

        let p = DMatrix::from_columns(&chosen.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
        let gram = p.adjoint() * &p;
        let geig = SymmetricEigen::new(gram);
        let inv_root = geig
            .eigenvalues
            .map(|x| Complex64::new(1.0 / x.max(1e-300).sqrt(), 0.0));
        let w =
            &geig.eigenvectors * DMatrix::from_diagonal(&inv_root) * geig.eigenvectors.adjoint();
        let y = p * w;
        for (i, pair) in pairs[start..end].iter().enumerate() {
            nus.push(pair.0);
            out.push(y.column(i).into_owned());
        }
        start = end;
    }
    (nus, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn form_for_one_and_two_modes() {
        let om = symplectic_form(1).unwrap();
        assert_eq!(
            om.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );
        let om2 = symplectic_form(2).unwrap().into_matrix();
        assert_relative_eq!(&om2 * &om2, -DMatrix::<f64>::identity(4, 4));
        assert!(symplectic_form(0).is_err());
    }

    #[test]
    fn physicality_examples() {
        assert!(is_physical(&DMatrix::identity(2, 2), 1e-9).unwrap());
        assert!(!is_physical(&DMatrix::from_diagonal_element(2, 2, 0.5), 1e-9).unwrap());
        let sq = DMatrix::from_row_slice(2, 2, &[(-2.0f64).exp(), 0.0, 0.0, 2.0f64.exp()]);
        assert!(is_physical(&sq, 1e-9).unwrap());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(is_physical(&asym, 1e-9), Err(Error::Shape(_))));
    }

    #[test]
    fn vacuum_and_thermal() {
        let w = williamson(&DMatrix::identity(6, 6)).unwrap();
        assert_eq!(w.nu, vec![1.0, 1.0, 1.0]);
        assert_relative_eq!(w.s, DMatrix::identity(6, 6), epsilon = 1e-12);

        let th = DMatrix::from_diagonal_element(2, 2, 21.0);
        let w = williamson(&th).unwrap();
        assert_relative_eq!(w.nu[0], 21.0, epsilon = 1e-12);
        assert_relative_eq!(w.s, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn single_mode_squeezer() {
        let e = std::f64::consts::E;
        let sq = DMatrix::from_row_slice(2, 2, &[e.powi(-2), 0.0, 0.0, e.powi(2)]);
        let w = williamson(&sq).unwrap();
        assert_relative_eq!(w.nu[0], 1.0, epsilon = 1e-10);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0 / e, 0.0, 0.0, e]);
        assert_relative_eq!(w.s, expect, epsilon = 1e-10);
        assert!(w.recon_residual < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, 1.0, 1.0]));
        let nu = symplectic_eigenvalues(&s).unwrap();
        assert_relative_eq!(nu[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(nu[1], 1.0, epsilon = 1e-12);

        // two-mode squeezed vacuum, cosh 2r = 2
        let c = 2.0;
        let sh = (c * c - 1.0f64).sqrt();
        let tmsv = DMatrix::from_row_slice(
            4,
            4,
            &[
                c, 0.0, sh, 0.0, //
                0.0, c, 0.0, -sh, //
                sh, 0.0, c, 0.0, //
                0.0, -sh, 0.0, c,
            ],
        );
        let nu = symplectic_eigenvalues(&tmsv).unwrap();
        assert_relative_eq!(nu[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(nu[1], 1.0, epsilon = 1e-10);
        let w = williamson(&tmsv).unwrap();
        assert!(w.recon_residual < 1e-10 && w.symp_residual < 1e-10);
    }

    #[test]
    fn unphysical_is_rejected() {
        let s = DMatrix::from_diagonal_element(2, 2, 0.5);
        assert!(matches!(williamson(&s), Err(Error::Unphysical { .. })));
        assert!(matches!(
            symplectic_eigenvalues(&s),
            Err(Error::Unphysical { .. })
        ));
    }

    #[test]
    fn clamp_is_recorded() {
        let s = DMatrix::from_diagonal_element(2, 2, 1.0 - 1e-11);
        let w = williamson(&s).unwrap();
        assert_eq!(w.nu, vec![1.0]);
        assert_eq!(w.clamped, vec![0]);
    }
}

//! Gaussian quantum Fisher information from (x̄, σ) and their parameter derivatives.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{block, check_dims, check_len, check_symmetric, max_abs, symmetrize};
use crate::states::{inverse_covariance, GaussianState};
use crate::symplectic::{williamson_with, WilliamsonDecomposition};
use crate::tolerance::Tolerances;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The 2×2 blocks ω/√2, σ_z/√2, 1₂/√2, σ_x/√2 (l = 0..3).
pub fn basis_matrices() -> [Matrix2<f64>; 4] {
    let h = FRAC_1_SQRT_2;
    [
        Matrix2::new(0.0, h, -h, 0.0),
        Matrix2::new(h, 0.0, 0.0, -h),
        Matrix2::new(h, 0.0, 0.0, h),
        Matrix2::new(0.0, h, h, 0.0),
    ]
}

/// A_jk^(l): the l-th basis block placed at block (j, k) of a 2n×2n zero matrix.
pub fn embedded_basis_matrix(n: usize, j: usize, k: usize, l: usize) -> DMatrix<f64> {
    assert!(j < n && k < n && l < 4, "basis matrix index out of range");
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.fixed_view_mut::<2, 2>(2 * j, 2 * k)
        .copy_from(&basis_matrices()[l]);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermGroup {
    /// Covariance term of a plain state curve.
    Covariance,
    /// Covariance term between two populated modes.
    PopulatedBlock,
    /// Covariance term coupling a populated mode to a new derivative mode.
    LeakageBlock,
    /// Mean-field term from the explicit derivative of x̄.
    StateDerivative,
    /// Mean-field cross terms between explicit and mode-motion derivatives.
    Cross,
    /// Mean-field term from the motion of the modes alone.
    ModeMotion,
    /// Mean-field term of a plain state curve.
    Displacement,
}

/// One coefficient a_jk^(l) with its denominator ν_jν_k − (−1)^l.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub coefficient: f64,
    pub denominator: f64,
    /// a²/(2·denominator), or zero for a dropped 0/0 term.
    pub contribution: f64,
    pub group: TermGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTotal {
    pub group: TermGroup,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiBreakdown {
    pub total: f64,
    pub f_sigma: f64,
    pub f_xbar: f64,
    pub terms: Vec<Term>,
    pub groups: Vec<GroupTotal>,
    /// Symplectic eigenvalues clamped up to 1.
    pub clamped: Vec<usize>,
}

impl QfiBreakdown {
    pub fn group(&self, g: TermGroup) -> f64 {
        self.groups
            .iter()
            .filter(|x| x.group == g)
            .map(|x| x.value)
            .sum()
    }

    /// Coefficient a_jk^(l), zero when absent from the table.
    pub fn coefficient(&self, j: usize, k: usize, l: usize) -> f64 {
        self.terms
            .iter()
            .find(|t| t.j == j && t.k == k && t.l == l)
            .map_or(0.0, |t| t.coefficient)
    }
}

#[derive(Debug, Clone)]
pub struct SldCoefficients {
    pub l0: f64,
    pub l1: DVector<f64>,
    pub l2: DMatrix<f64>,
    pub terms: Vec<Term>,
}

/// Coefficients a_jk^(l) = Tr[A_jk^(l) B] for every pair accepted by `pair`, which
/// returns the eigenvalue product entering the denominator and the group label.
pub(crate) fn coefficient_table(
    b: &DMatrix<f64>,
    pair: impl Fn(usize, usize) -> Option<(f64, TermGroup)>,
    tol: &Tolerances,
) -> Result<Vec<Term>> {
    let n = b.nrows() / 2;
    let basis = basis_matrices();
    let mut terms = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for k in 0..n {
            let Some((prod, group)) = pair(j, k) else {
                continue;
            };
            let bkj = block(b, k, j);
            for (l, a_l) in basis.iter().enumerate() {
                let coefficient = (a_l * bkj).trace();
                let denominator = prod - if l % 2 == 0 { 1.0 } else { -1.0 };
                let contribution = if denominator < tol.sing {
                    if coefficient.abs() >= tol.zero {
                        return Err(Error::SingularSld {
                            j,
                            k,
                            l,
                            coefficient,
                            denominator,
                        });
                    }
                    0.0
                } else {
                    0.5 * coefficient * coefficient / denominator
                };
                terms.push(Term {
                    j,
                    k,
                    l,
                    coefficient,
                    denominator,
                    contribution,
                    group,
                });
            }
        }
    }
    Ok(terms)
}

/// ½ S⁻ᵀ (Σ a/den · A_jk) S⁻¹ over the non-dropped terms.
pub(crate) fn assemble_l2(s_inv: &DMatrix<f64>, terms: &[Term]) -> DMatrix<f64> {
    let d = s_inv.nrows();
    let basis = basis_matrices();
    let mut m = DMatrix::zeros(d, d);
    for t in terms.iter().filter(|t| t.contribution != 0.0) {
        let mut v = m.fixed_view_mut::<2, 2>(2 * t.j, 2 * t.k);
        v += basis[t.l] * (t.coefficient / t.denominator);
    }
    symmetrize(&(s_inv.transpose() * m * s_inv * 0.5))
}

pub(crate) fn check_consistency(
    l2: &DMatrix<f64>,
    dsigma: &DMatrix<f64>,
    sum: f64,
    tol: &Tolerances,
) -> Result<()> {
    let trace = (l2 * dsigma).trace();
    if (trace - sum).abs() > tol.xcheck * sum.abs().max(1.0) {
        return Err(Error::Inconsistent { trace, sum });
    }
    Ok(())
}

pub(crate) fn group_totals(terms: &[Term], extra: &[(TermGroup, f64)]) -> Vec<GroupTotal> {
    let mut out: Vec<GroupTotal> = Vec::new();
    let mut add = |g: TermGroup, v: f64| match out.iter_mut().find(|x| x.group == g) {
        Some(x) => x.value += v,
        None => out.push(GroupTotal { group: g, value: v }),
    };
    for t in terms {
        add(t.group, t.contribution);
    }
    for &(g, v) in extra {
        add(g, v);
    }
    out.sort_by_key(|g| g.group);
    out
}

fn validate_derivatives(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    dxbar: &DVector<f64>,
    tol: &Tolerances,
) -> Result<()> {
    let d = 2 * state.modes();
    check_dims(dsigma, d, d, "covariance derivative")?;
    check_len(dxbar, d, "mean derivative")?;
    check_symmetric(dsigma, tol.symm.max(1e-12), "covariance derivative")
}

struct CovariancePart {
    dec: WilliamsonDecomposition,
    s_inv: DMatrix<f64>,
    terms: Vec<Term>,
    l2: DMatrix<f64>,
    f_sigma: f64,
}

fn covariance_part(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<CovariancePart> {
    let dec = williamson_with(state.sigma(), tol)?;
    let s_inv = dec.s_inverse();
    let ds = symmetrize(dsigma);
    let b = &s_inv * &ds * s_inv.transpose();
    let nu = dec.nu.clone();
    let terms = coefficient_table(&b, |j, k| Some((nu[j] * nu[k], TermGroup::Covariance)), tol)?;
    let f_sigma: f64 = terms.iter().map(|t| t.contribution).sum();
    let l2 = assemble_l2(&s_inv, &terms);
    check_consistency(&l2, &ds, f_sigma, tol)?;
    Ok(CovariancePart {
        dec,
        s_inv,
        terms,
        l2,
        f_sigma,
    })
}

pub fn sld(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    dxbar: &DVector<f64>,
) -> Result<SldCoefficients> {
    sld_with(state, dsigma, dxbar, &Tolerances::default())
}

pub fn sld_with(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    dxbar: &DVector<f64>,
    tol: &Tolerances,
) -> Result<SldCoefficients> {
    validate_derivatives(state, dsigma, dxbar, tol)?;
    let part = covariance_part(state, dsigma, tol)?;
    let sigma_inv = inverse_covariance(state)?;
    let x = state.xbar();
    let l1 = &sigma_inv * dxbar - &part.l2 * x;
    let l0 = -0.5 * (state.sigma() * &part.l2).trace() - l1.dot(x) - 0.5 * x.dot(&(&part.l2 * x));
    let _ = &part.s_inv;
    Ok(SldCoefficients {
        l0,
        l1,
        l2: part.l2,
        terms: part.terms,
    })
}

pub fn qfi(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    dxbar: &DVector<f64>,
) -> Result<QfiBreakdown> {
    qfi_with(state, dsigma, dxbar, &Tolerances::default())
}

pub fn qfi_with(
    state: &GaussianState,
    dsigma: &DMatrix<f64>,
    dxbar: &DVector<f64>,
    tol: &Tolerances,
) -> Result<QfiBreakdown> {
    validate_derivatives(state, dsigma, dxbar, tol)?;
    let part = covariance_part(state, dsigma, tol)?;
    let sigma_inv = inverse_covariance(state)?;
    let f_xbar = dxbar.dot(&(&sigma_inv * dxbar)).max(0.0);
    Ok(QfiBreakdown {
        total: part.f_sigma + f_xbar,
        f_sigma: part.f_sigma,
        f_xbar,
        groups: group_totals(&part.terms, &[(TermGroup::Displacement, f_xbar)]),
        terms: part.terms,
        clamped: part.dec.clamped,
    })
}

type StateFn<'a> = dyn Fn(f64) -> Result<GaussianState> + Send + Sync + 'a;
type DerivativeFn<'a> = dyn Fn(f64) -> Result<(DVector<f64>, DMatrix<f64>)> + Send + Sync + 'a;

/// θ ↦ (x̄, σ), with optional analytic derivatives (∂x̄, ∂σ).
pub struct StateCurve<'a> {
    eval: Box<StateFn<'a>>,
    derivative: Option<Box<DerivativeFn<'a>>>,
    step: Option<f64>,
}

impl<'a> StateCurve<'a> {
    pub fn new(eval: impl Fn(f64) -> Result<GaussianState> + Send + Sync + 'a) -> Self {
        StateCurve {
            eval: Box::new(eval),
            derivative: None,
            step: None,
        }
    }

    pub fn with_derivative(
        mut self,
        d: impl Fn(f64) -> Result<(DVector<f64>, DMatrix<f64>)> + Send + Sync + 'a,
    ) -> Self {
        self.derivative = Some(Box::new(d));
        self
    }

    /// Fixed finite-difference step instead of 1e-5·max(1, |θ|).
    pub fn with_step(mut self, h: f64) -> Self {
        self.step = Some(h);
        self
    }

    pub fn state(&self, theta: f64) -> Result<GaussianState> {
        (self.eval)(theta).map_err(|e| e.at(theta))
    }

    /// (∂x̄, ∂σ) at θ, analytic when available, else central differences.
    pub fn derivatives(&self, theta: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if let Some(d) = &self.derivative {
            return d(theta).map_err(|e| e.at(theta));
        }
        let h = self.step.unwrap_or(1e-5 * theta.abs().max(1.0));
        let plus = self.state(theta + h)?;
        let minus = self.state(theta - h)?;
        let dx = (plus.xbar() - minus.xbar()) / (2.0 * h);
        let ds = symmetrize(&((plus.sigma() - minus.sigma()) / (2.0 * h)));
        Ok((dx, ds))
    }
}

pub fn qfi_curve(curve: &StateCurve<'_>, theta: f64) -> Result<QfiBreakdown> {
    let state = curve.state(theta)?;
    let (dx, ds) = curve.derivatives(theta)?;
    qfi(&state, &ds, &dx).map_err(|e| e.at(theta))
}

/// Largest |entry| of a matrix, exposed for diagnostics.
pub fn max_entry(m: &DMatrix<f64>) -> f64 {
    max_abs(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{coherent, make_state, thermal, vacuum};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn basis_is_orthonormal() {
        let a = basis_matrices();
        for l in 0..4 {
            for m in 0..4 {
                let tr = (a[l] * a[m].transpose()).trace();
                assert_relative_eq!(tr, if l == m { 1.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
        assert_eq!(a[0].transpose(), -a[0]);
        assert_relative_eq!(a[2], Matrix2::identity() * FRAC_1_SQRT_2);
        let e = embedded_basis_matrix(3, 1, 2, 3);
        assert_eq!(e[(2, 5)], FRAC_1_SQRT_2);
    }

    #[test]
    fn coherent_displacement() {
        let vac = vacuum(1).unwrap();
        let dx = DVector::from_vec(vec![2.0, 0.0]);
        let s = sld(&vac, &DMatrix::zeros(2, 2), &dx).unwrap();
        assert_relative_eq!(s.l2, DMatrix::zeros(2, 2));
        assert_relative_eq!(s.l1, dx.clone());
        assert_eq!(s.l0, 0.0);
        let f = qfi(&vac, &DMatrix::zeros(2, 2), &dx).unwrap();
        assert_relative_eq!(f.total, 4.0, epsilon = 1e-14);
        assert_eq!(f.f_sigma, 0.0);
    }

    #[test]
    fn thermal_population_derivative() {
        let n = 3.0;
        let dn = 0.7;
        let th = thermal(n).unwrap();
        let ds = DMatrix::from_diagonal_element(2, 2, 2.0 * dn);
        let s = sld(&th, &ds, &DVector::zeros(2)).unwrap();
        for t in &s.terms {
            if t.l != 2 {
                assert_eq!(t.coefficient, 0.0);
            }
        }
        let a2 = s.terms.iter().find(|t| t.l == 2).unwrap().coefficient;
        assert_relative_eq!(a2 * a2, 8.0 * dn * dn, epsilon = 1e-12);
        let f = qfi(&th, &ds, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(f.total, dn * dn / (n * (n + 1.0)), epsilon = 1e-12);
    }

    #[test]
    fn nothing_changes() {
        let st = make_state(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_diagonal_element(2, 2, 2.0),
        )
        .unwrap();
        let f = qfi(&st, &DMatrix::zeros(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(f.total, 0.0);
        assert!(f.terms.iter().all(|t| t.coefficient == 0.0));
    }

    #[test]
    fn pure_state_singular_policy() {
        // dσ with an l = 0 like component on vacuum is impossible (symmetric), but an
        // anti-squeezing direction on a pure state gives a finite QFI via l = 1, 3.
        let vac = vacuum(1).unwrap();
        let ds = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 2.0]));
        let f = qfi(&vac, &ds, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(f.total, 2.0, epsilon = 1e-12);

        // isotropic growth of a pure state has no finite SLD
        let ds = DMatrix::from_diagonal_element(2, 2, 1.0);
        assert!(matches!(
            qfi(&vac, &ds, &DVector::zeros(2)),
            Err(Error::SingularSld { l: 2, .. })
        ));
    }

    #[test]
    fn curves() {
        let coh = StateCurve::new(|t| Ok(coherent(Complex64::new(t, 0.0))));
        assert_relative_eq!(qfi_curve(&coh, 0.3).unwrap().total, 4.0, epsilon = 1e-8);

        let fixed = StateCurve::new(|_| thermal(2.0));
        assert_eq!(qfi_curve(&fixed, 1.0).unwrap().total, 0.0);

        let th = StateCurve::new(thermal);
        for &t in &[0.5, 1.0, 4.0] {
            let f = qfi_curve(&th, t).unwrap().total;
            assert_relative_eq!(f, 1.0 / (t * (t + 1.0)), max_relative = 1e-6);
        }

        let th_exact = StateCurve::new(thermal).with_derivative(|_| {
            Ok((DVector::zeros(2), DMatrix::from_diagonal_element(2, 2, 2.0)))
        });
        assert_relative_eq!(
            qfi_curve(&th_exact, 2.0).unwrap().total,
            1.0 / 6.0,
            epsilon = 1e-14
        );

        let broken = StateCurve::new(thermal);
        assert!(matches!(
            qfi_curve(&broken, 0.0),
            Err(Error::Evaluation { .. })
        ));
    }
}

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{gram_schmidt_derivatives_with, DerivativeCoupling, ModeFamily};
use crate::error::{Error, Result};
use crate::linalg::{check_dims, check_len, check_symmetric, direct_sum, spd_inverse, symmetrize};
use crate::qfi::{
    assemble_l2, check_consistency, coefficient_table, group_totals, QfiBreakdown, Term, TermGroup,
};
use crate::states::GaussianState;
use crate::symplectic::williamson_with;
use crate::tolerance::Tolerances;

/// A state of the populated modes of `family` together with its explicit θ-derivatives.
pub struct ModeEncodedProblem<'a> {
    pub family: &'a dyn ModeFamily,
    pub theta: f64,
    /// Covariance V_n of the populated modes.
    pub v: DMatrix<f64>,
    pub xbar: DVector<f64>,
    /// ∂V_n at fixed modes.
    pub dv: DMatrix<f64>,
    /// ∂x̄_n at fixed modes.
    pub dxbar: DVector<f64>,
}

impl<'a> ModeEncodedProblem<'a> {
    /// Problem whose state has no explicit θ-dependence.
    pub fn new(family: &'a dyn ModeFamily, theta: f64, state: &GaussianState) -> Self {
        let d = 2 * state.modes();
        ModeEncodedProblem {
            family,
            theta,
            v: state.sigma().clone(),
            xbar: state.xbar().clone(),
            dv: DMatrix::zeros(d, d),
            dxbar: DVector::zeros(d),
        }
    }

    pub fn with_derivatives(mut self, dv: DMatrix<f64>, dxbar: DVector<f64>) -> Self {
        self.dv = dv;
        self.dxbar = dxbar;
        self
    }

    fn check(&self, coupling: &DerivativeCoupling, tol: &Tolerances) -> Result<usize> {
        let n = self.family.mode_count();
        let d = 2 * n;
        check_dims(&self.v, d, d, "populated-mode covariance")?;
        check_dims(&self.dv, d, d, "populated-mode covariance derivative")?;
        check_len(&self.xbar, d, "populated-mode mean")?;
        check_len(&self.dxbar, d, "populated-mode mean derivative")?;
        check_symmetric(&self.v, tol.symm, "populated-mode covariance")?;
        check_symmetric(
            &self.dv,
            tol.symm.max(1e-12),
            "populated-mode covariance derivative",
        )?;
        if coupling.populated() != n {
            return Err(Error::Shape(format!(
                "coupling has {} populated modes, family has {n}",
                coupling.populated()
            )));
        }
        Ok(n)
    }
}

/// The equivalent problem on the n + m reduced modes: σ = V ⊕ 1 and its derivative,
/// mean and mean derivative.
#[derive(Debug, Clone)]
pub struct ReducedForm {
    pub sigma: DMatrix<f64>,
    pub dsigma: DMatrix<f64>,
    pub xbar: DVector<f64>,
    pub dxbar: DVector<f64>,
    pub populated: usize,
    pub derivative_modes: usize,
}

impl ReducedForm {
    pub fn state(&self) -> Result<GaussianState> {
        crate::states::make_state(self.xbar.clone(), self.sigma.clone())
    }
}

/// ∂σ = [[D_nᵀ(V−1) + (V−1)D_n + ∂V, (V−1)D_∂], [D_∂ᵀ(V−1), 0]] and
/// ∂x̄ = [∂x̄_n + D_nᵀx̄_n; D_∂ᵀx̄_n].
pub fn reduced_form(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
) -> Result<ReducedForm> {
    let n = problem.check(coupling, &Tolerances::default())?;
    Ok(reduce(problem, coupling, n))
}

fn reduce(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
    n: usize,
) -> ReducedForm {
    let m = coupling.m;
    let d = 2 * n;
    let vm1 = &problem.v - DMatrix::identity(d, d);
    let dn = &coupling.dn;
    let dp = &coupling.dpartial;

    let mut dsigma = DMatrix::zeros(d + 2 * m, d + 2 * m);
    let top = dn.transpose() * &vm1 + &vm1 * dn + symmetrize(&problem.dv);
    dsigma.view_mut((0, 0), (d, d)).copy_from(&symmetrize(&top));
    if m > 0 {
        let side = &vm1 * dp;
        dsigma.view_mut((0, d), (d, 2 * m)).copy_from(&side);
        dsigma
            .view_mut((d, 0), (2 * m, d))
            .copy_from(&side.transpose());
    }

    let mut dxbar = DVector::zeros(d + 2 * m);
    dxbar
        .rows_mut(0, d)
        .copy_from(&(&problem.dxbar + dn.transpose() * &problem.xbar));
    if m > 0 {
        dxbar
            .rows_mut(d, 2 * m)
            .copy_from(&(dp.transpose() * &problem.xbar));
    }
    let mut xbar = DVector::zeros(d + 2 * m);
    xbar.rows_mut(0, d).copy_from(&problem.xbar);

    ReducedForm {
        sigma: direct_sum(&problem.v, &DMatrix::identity(2 * m, 2 * m)),
        dsigma,
        xbar,
        dxbar,
        populated: n,
        derivative_modes: m,
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceContribution {
    pub value: f64,
    /// Indices run over populated modes first, then derivative modes.
    pub terms: Vec<Term>,
    pub clamped: Vec<usize>,
}

pub fn f_sigma_mode_encoded(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
) -> Result<CovarianceContribution> {
    f_sigma_mode_encoded_with(problem, coupling, &Tolerances::default())
}

/// Covariance part: populated pairs over ν_jν_k − (−1)^l, populated/derivative
/// pairs over ν_j − (−1)^l. Derivative/derivative pairs carry nothing.
pub fn f_sigma_mode_encoded_with(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
    tol: &Tolerances,
) -> Result<CovarianceContribution> {
    let n = problem.check(coupling, tol)?;
    let red = reduce(problem, coupling, n);
    covariance(problem, &red, tol)
}

fn covariance(
    problem: &ModeEncodedProblem<'_>,
    red: &ReducedForm,
    tol: &Tolerances,
) -> Result<CovarianceContribution> {
    let n = red.populated;
    let m = red.derivative_modes;
    let dec = williamson_with(&problem.v, tol)?;
    let s_inv = direct_sum(&dec.s_inverse(), &DMatrix::identity(2 * m, 2 * m));
    let b = &s_inv * &red.dsigma * s_inv.transpose();
    let nu = &dec.nu;
    let terms = coefficient_table(
        &b,
        |j, k| match (j < n, k < n) {
            (true, true) => Some((nu[j] * nu[k], TermGroup::PopulatedBlock)),
            (true, false) => Some((nu[j], TermGroup::LeakageBlock)),
            (false, true) => Some((nu[k], TermGroup::LeakageBlock)),
            (false, false) => None,
        },
        tol,
    )?;
    let value: f64 = terms.iter().map(|t| t.contribution).sum();
    let l2 = assemble_l2(&s_inv, &terms);
    check_consistency(&l2, &red.dsigma, value, tol)?;
    Ok(CovarianceContribution {
        value,
        terms,
        clamped: dec.clamped,
    })
}

/// Mean-field part split as ∂x̄ᵀV⁻¹∂x̄ + 2∂x̄ᵀV⁻¹D_nᵀx̄ + x̄ᵀ(D_nV⁻¹D_nᵀ + D_∂D_∂ᵀ)x̄.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementContribution {
    pub value: f64,
    pub state_derivative: f64,
    pub cross: f64,
    pub mode_motion: f64,
}

pub fn f_xbar_mode_encoded(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
) -> Result<DisplacementContribution> {
    let tol = Tolerances::default();
    problem.check(coupling, &tol)?;
    displacement(problem, coupling)
}

fn displacement(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
) -> Result<DisplacementContribution> {
    let v_inv = spd_inverse(&problem.v, "populated-mode covariance")?;
    let motion = coupling.dn.transpose() * &problem.xbar;
    let leak = coupling.dpartial.transpose() * &problem.xbar;
    let dx = &problem.dxbar;
    let state_derivative = dx.dot(&(&v_inv * dx));
    let cross = 2.0 * dx.dot(&(&v_inv * &motion));
    let mode_motion = motion.dot(&(&v_inv * &motion)) + leak.norm_squared();
    let y = dx + &motion;
    let value = (y.dot(&(&v_inv * &y)) + leak.norm_squared()).max(0.0);
    Ok(DisplacementContribution {
        value,
        state_derivative,
        cross,
        mode_motion,
    })
}

pub fn mode_encoded_qfi(problem: &ModeEncodedProblem<'_>) -> Result<QfiBreakdown> {
    mode_encoded_qfi_with(problem, &Tolerances::default())
}

pub fn mode_encoded_qfi_with(
    problem: &ModeEncodedProblem<'_>,
    tol: &Tolerances,
) -> Result<QfiBreakdown> {
    let coupling = gram_schmidt_derivatives_with(problem.family, problem.theta, tol)?;
    mode_encoded_qfi_using(problem, &coupling, tol)
}

/// QFI with a precomputed coupling.
pub fn mode_encoded_qfi_using(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
    tol: &Tolerances,
) -> Result<QfiBreakdown> {
    let run = || -> Result<QfiBreakdown> {
        let n = problem.check(coupling, tol)?;
        let red = reduce(problem, coupling, n);
        let cov = covariance(problem, &red, tol)?;
        let disp = displacement(problem, coupling)?;
        let groups = group_totals(
            &cov.terms,
            &[
                (TermGroup::StateDerivative, disp.state_derivative),
                (TermGroup::Cross, disp.cross),
                (TermGroup::ModeMotion, disp.mode_motion),
            ],
        );
        Ok(QfiBreakdown {
            total: cov.value + disp.value,
            f_sigma: cov.value,
            f_xbar: disp.value,
            terms: cov.terms,
            groups,
            clamped: cov.clamped,
        })
    };
    run().map_err(|e| match e {
        Error::Evaluation { .. } => e,
        other => other.at(problem.theta),
    })
}

/// The mode whose mean-field change carries all of F_x̄.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMode {
    /// Coefficients over u_0..u_{n−1}, then u′_0..u′_{m−1}.
    pub coefficients: Vec<Complex64>,
    /// Unit phase-space vector y/‖y‖ on the reduced modes; its q-quadrature is
    /// the one to squeeze.
    pub direction: DVector<f64>,
    /// ‖y‖
    pub norm: f64,
    pub populated: usize,
}

/// y = (∂x̄_n + D_nᵀx̄_n, D_∂ᵀx̄_n); the mode is Σ_k (y_{2k} + i y_{2k+1})/‖y‖ · e_k.
pub fn sensing_mode(
    problem: &ModeEncodedProblem<'_>,
    coupling: &DerivativeCoupling,
) -> Result<SensingMode> {
    let tol = Tolerances::default();
    let n = problem.check(coupling, &tol)?;
    let red = reduce(problem, coupling, n);
    let y = red.dxbar;
    let norm = y.norm();
    if !(norm > tol.zero) {
        return Err(Error::UndefinedSensingMode);
    }
    let direction = y / norm;
    let coefficients = (0..direction.len() / 2)
        .map(|k| Complex64::new(direction[2 * k], direction[2 * k + 1]))
        .collect();
    Ok(SensingMode {
        coefficients,
        direction,
        norm,
        populated: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{gram_schmidt_derivatives, HermiteGaussFamily, StaticFamily};
    use crate::states::{coherent, product_state, squeezed_vacuum, thermal, vacuum};
    use approx::assert_relative_eq;

    fn beam(orders: Vec<usize>) -> HermiteGaussFamily {
        HermiteGaussFamily::new(orders, 1.0).unwrap()
    }

    #[test]
    fn thermal_beam() {
        let fam = beam(vec![0]);
        let st = thermal(10.0).unwrap();
        let p = ModeEncodedProblem::new(&fam, 0.0, &st);
        let f = mode_encoded_qfi(&p).unwrap();
        assert_relative_eq!(f.total, 20.0, epsilon = 1e-12);
        assert_relative_eq!(f.group(TermGroup::LeakageBlock), 20.0, epsilon = 1e-12);
        assert_eq!(f.f_xbar, 0.0);
    }

    #[test]
    fn thermal_beam_with_population_change() {
        let fam = beam(vec![0]);
        let n0 = 2.0;
        let dn0 = 0.7;
        let st = thermal(n0).unwrap();
        let p = ModeEncodedProblem::new(&fam, 0.0, &st)
            .with_derivatives(DMatrix::identity(2, 2) * (2.0 * dn0), DVector::zeros(2));
        let cp = gram_schmidt_derivatives(&fam, 0.0).unwrap();
        let f = f_sigma_mode_encoded(&p, &cp).unwrap().value;
        let expect = dn0 * dn0 / (n0 * (n0 + 1.0)) + 4.0 * 0.5 * n0;
        assert_relative_eq!(f, expect, epsilon = 1e-12);
    }

    #[test]
    fn coherent_beam() {
        let fam = beam(vec![0]);
        let st = coherent(Complex64::new(1.5, -2.0));
        let p = ModeEncodedProblem::new(&fam, 0.0, &st);
        let cp = gram_schmidt_derivatives(&fam, 0.0).unwrap();
        assert_eq!(f_sigma_mode_encoded(&p, &cp).unwrap().value, 0.0);
        let x = f_xbar_mode_encoded(&p, &cp).unwrap();
        assert_relative_eq!(x.value, 4.0 * 0.5 * 6.25, epsilon = 1e-12);
        assert_relative_eq!(x.mode_motion, x.value, epsilon = 1e-12);
        assert_eq!(x.state_derivative, 0.0);
    }

    #[test]
    fn coherent_with_squeezed_derivative_mode() {
        let fam = beam(vec![0, 1]);
        let r = 0.6;
        let n0: f64 = 3.0;
        let st = product_state(&[
            coherent(Complex64::new(n0.sqrt(), 0.0)),
            squeezed_vacuum(r, 0.0).unwrap(),
        ])
        .unwrap();
        let p = ModeEncodedProblem::new(&fam, 0.0, &st);
        let cp = gram_schmidt_derivatives(&fam, 0.0).unwrap();
        let x = f_xbar_mode_encoded(&p, &cp).unwrap();
        assert_relative_eq!(x.value, 4.0 * n0 * 0.5 * (2.0 * r).exp(), epsilon = 1e-10);

        let sm = sensing_mode(&p, &cp).unwrap();
        assert!(sm.coefficients[0].norm() < 1e-14);
        assert_relative_eq!(sm.coefficients[1].norm(), 1.0, epsilon = 1e-14);
        // F_x̄ = ‖y‖² (V⁻¹) along the sensing direction
        let red = reduced_form(&p, &cp).unwrap();
        let inv = spd_inverse(&red.sigma, "test").unwrap();
        let along = sm.direction.dot(&(&inv * &sm.direction));
        assert_relative_eq!(sm.norm * sm.norm * along, x.value, epsilon = 1e-10);
    }

    #[test]
    fn sensing_mode_needs_data() {
        let fam = beam(vec![0]);
        let st = thermal(1.0).unwrap();
        let p = ModeEncodedProblem::new(&fam, 0.0, &st);
        let cp = gram_schmidt_derivatives(&fam, 0.0).unwrap();
        assert!(matches!(
            sensing_mode(&p, &cp),
            Err(Error::UndefinedSensingMode)
        ));
    }

    #[test]
    fn pure_mean_change_without_motion() {
        let fam = StaticFamily { modes: 1 };
        let st = vacuum(1).unwrap();
        let p = ModeEncodedProblem::new(&fam, 0.0, &st)
            .with_derivatives(DMatrix::zeros(2, 2), DVector::from_vec(vec![0.0, 2.0]));
        let cp = gram_schmidt_derivatives(&fam, 0.0).unwrap();
        let sm = sensing_mode(&p, &cp).unwrap();
        assert_relative_eq!(sm.coefficients[0].im, 1.0, epsilon = 1e-15);
        let f = mode_encoded_qfi(&p).unwrap();
        assert_relative_eq!(f.total, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn parameter_free_problem() {
        let fam = StaticFamily { modes: 2 };
        let st =
            product_state(&[thermal(1.0).unwrap(), coherent(Complex64::new(1.0, 1.0))]).unwrap();
        let f = mode_encoded_qfi(&ModeEncodedProblem::new(&fam, 0.0, &st)).unwrap();
        assert_eq!(f.total, 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let fam = beam(vec![0, 1]);
        let st = thermal(1.0).unwrap();
        assert!(matches!(
            mode_encoded_qfi(&ModeEncodedProblem::new(&fam, 0.0, &st)),
            Err(Error::Evaluation { .. })
        ));
    }
}

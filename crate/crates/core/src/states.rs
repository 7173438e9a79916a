//! Gaussian states, Gaussian channels and mode-basis changes.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    block, check_dims, check_len, check_symmetric, direct_sum, embed, max_abs, omega,
    phase_space_dim, set_block, spd_inverse,
};
use crate::symplectic::{is_physical, symplectic_eigenvalues_with};
use crate::tolerance::Tolerances;

/// First and second moments of a Gaussian state in interleaved (q, p) ordering,
/// with vacuum covariance equal to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct GaussianState {
    xbar: DVector<f64>,
    sigma: DMatrix<f64>,
}

/// On-disk form: `{"xbar": [...], "sigma": [[...], ...]}`, rows of σ in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateJson {
    pub xbar: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Shape(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<StateJson> for GaussianState {
    type Error = Error;

    fn try_from(j: StateJson) -> Result<Self> {
        let sigma = rows_to_matrix(&j.sigma, "sigma")?;
        make_state(DVector::from_vec(j.xbar), sigma)
    }
}

impl From<GaussianState> for StateJson {
    fn from(s: GaussianState) -> Self {
        StateJson {
            xbar: s.xbar.iter().copied().collect(),
            sigma: matrix_to_rows(&s.sigma),
        }
    }
}

impl GaussianState {
    pub fn modes(&self) -> usize {
        self.xbar.len() / 2
    }

    pub fn xbar(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// (tr σ − 2N)/4 + |x̄|²/4.
    pub fn mean_photon_number(&self) -> f64 {
        (self.sigma.trace() - 2.0 * self.modes() as f64) / 4.0 + self.xbar.norm_squared() / 4.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&StateJson::from(self.clone())).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(e.to_string()))
    }
}

pub fn make_state(xbar: DVector<f64>, sigma: DMatrix<f64>) -> Result<GaussianState> {
    make_state_with(xbar, sigma, &Tolerances::default())
}

pub fn make_state_with(
    xbar: DVector<f64>,
    sigma: DMatrix<f64>,
    tol: &Tolerances,
) -> Result<GaussianState> {
    let n = phase_space_dim(&sigma, "sigma")?;
    check_len(&xbar, 2 * n, "xbar")?;
    check_symmetric(&sigma, tol.symm, "sigma")?;
    if !is_physical(&sigma, tol.phys)? {
        let min_nu = symplectic_eigenvalues_with(&sigma, tol)
            .err()
            .and_then(|e| match e {
                Error::Unphysical { min_nu } => Some(min_nu),
                _ => None,
            })
            .unwrap_or(0.0);
        return Err(Error::Unphysical { min_nu });
    }
    Ok(GaussianState { xbar, sigma })
}

pub fn vacuum(n: usize) -> Result<GaussianState> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "vacuum needs at least one mode".into(),
        ));
    }
    Ok(GaussianState {
        xbar: DVector::zeros(2 * n),
        sigma: DMatrix::identity(2 * n, 2 * n),
    })
}

/// Single-mode coherent state |α⟩, x̄ = 2(Re α, Im α).
pub fn coherent(alpha: Complex64) -> GaussianState {
    GaussianState {
        xbar: DVector::from_vec(vec![2.0 * alpha.re, 2.0 * alpha.im]),
        sigma: DMatrix::identity(2, 2),
    }
}

fn check_population(x: f64, name: &str) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "{name} must be a finite non-negative number, got {x}"
        )));
    }
    Ok(())
}

pub fn thermal(n0: f64) -> Result<GaussianState> {
    check_population(n0, "thermal photon number")?;
    Ok(GaussianState {
        xbar: DVector::zeros(2),
        sigma: DMatrix::from_diagonal_element(2, 2, 2.0 * n0 + 1.0),
    })
}

pub fn squeezed_vacuum(r: f64, angle: f64) -> Result<GaussianState> {
    squeezed_thermal(0.0, r, angle)
}

/// (2N_T + 1) R(angle) diag(e^{−2r}, e^{2r}) R(angle)ᵀ; angle 0 squeezes q.
pub fn squeezed_thermal(nt: f64, r: f64, angle: f64) -> Result<GaussianState> {
    check_population(nt, "thermal photon number")?;
    if !r.is_finite() || !angle.is_finite() {
        return Err(Error::Domain("squeezing parameters must be finite".into()));
    }
    Ok(GaussianState {
        xbar: DVector::zeros(2),
        sigma: squeezed_thermal_covariance(nt, r, angle),
    })
}

pub(crate) fn squeezed_thermal_covariance(nt: f64, r: f64, angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let d = Matrix2::new((-2.0 * r).exp(), 0.0, 0.0, (2.0 * r).exp());
    let m = rot * d * rot.transpose() * (2.0 * nt + 1.0);
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// Product state of independent subsystems.
pub fn product_state(parts: &[GaussianState]) -> Result<GaussianState> {
    let mut it = parts.iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidDimension("product of zero states".into()))?;
    let mut xbar = first.xbar.clone();
    let mut sigma = first.sigma.clone();
    for p in it {
        let mut x = DVector::zeros(xbar.len() + p.xbar.len());
        x.rows_mut(0, xbar.len()).copy_from(&xbar);
        x.rows_mut(xbar.len(), p.xbar.len()).copy_from(&p.xbar);
        xbar = x;
        sigma = direct_sum(&sigma, &p.sigma);
    }
    Ok(GaussianState { xbar, sigma })
}

/// x̄ ↦ T x̄ + z̄, σ ↦ T σ Tᵀ + N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct GaussianChannel {
    t: DMatrix<f64>,
    nmat: DMatrix<f64>,
    zbar: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelJson {
    pub t: Vec<Vec<f64>>,
    pub nmat: Vec<Vec<f64>>,
    pub zbar: Vec<f64>,
}

impl TryFrom<ChannelJson> for GaussianChannel {
    type Error = Error;

    fn try_from(j: ChannelJson) -> Result<Self> {
        GaussianChannel::new(
            rows_to_matrix(&j.t, "t")?,
            rows_to_matrix(&j.nmat, "nmat")?,
            DVector::from_vec(j.zbar),
        )
    }
}

impl From<GaussianChannel> for ChannelJson {
    fn from(c: GaussianChannel) -> Self {
        ChannelJson {
            t: matrix_to_rows(&c.t),
            nmat: matrix_to_rows(&c.nmat),
            zbar: c.zbar.iter().copied().collect(),
        }
    }
}

impl GaussianChannel {
    pub fn new(t: DMatrix<f64>, nmat: DMatrix<f64>, zbar: DVector<f64>) -> Result<Self> {
        Self::new_with(t, nmat, zbar, &Tolerances::default())
    }

    /// Rejects channels violating N + i T Ω Tᵀ − i Ω′ ⪰ 0.
    pub fn new_with(
        t: DMatrix<f64>,
        nmat: DMatrix<f64>,
        zbar: DVector<f64>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if !t.nrows().is_multiple_of(2)
            || !t.ncols().is_multiple_of(2)
            || t.nrows() == 0
            || t.ncols() == 0
        {
            return Err(Error::Shape(format!(
                "channel matrix T is {}x{}, expected even dimensions",
                t.nrows(),
                t.ncols()
            )));
        }
        let out = t.nrows();
        check_dims(&nmat, out, out, "channel noise matrix")?;
        check_len(&zbar, out, "channel shift")?;
        check_symmetric(&nmat, tol.symm, "channel noise matrix")?;
        let im = &t * omega(t.ncols() / 2) * t.transpose() - omega(out / 2);
        let h = DMatrix::from_fn(out, out, |i, j| Complex64::new(nmat[(i, j)], im[(i, j)]));
        let min = nalgebra::SymmetricEigen::new(h).eigenvalues.min();
        let scale = max_abs(&nmat).max(1.0);
        if min < -tol.phys * scale {
            return Err(Error::Domain(format!(
                "channel violates complete positivity (min eigenvalue {min:e})"
            )));
        }
        Ok(GaussianChannel { t, nmat, zbar })
    }

    pub fn identity(n: usize) -> Self {
        GaussianChannel {
            t: DMatrix::identity(2 * n, 2 * n),
            nmat: DMatrix::zeros(2 * n, 2 * n),
            zbar: DVector::zeros(2 * n),
        }
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn nmat(&self) -> &DMatrix<f64> {
        &self.nmat
    }

    pub fn zbar(&self) -> &DVector<f64> {
        &self.zbar
    }

    pub fn input_modes(&self) -> usize {
        self.t.ncols() / 2
    }

    pub fn output_modes(&self) -> usize {
        self.t.nrows() / 2
    }

    /// The channel applying `self` first, then `next`.
    pub fn then(&self, next: &GaussianChannel) -> Result<GaussianChannel> {
        if next.input_modes() != self.output_modes() {
            return Err(Error::Shape(format!(
                "cannot compose: {} output modes feed {} input modes",
                self.output_modes(),
                next.input_modes()
            )));
        }
        Ok(GaussianChannel {
            t: &next.t * &self.t,
            nmat: &next.t * &self.nmat * next.t.transpose() + &next.nmat,
            zbar: &next.t * &self.zbar + &next.zbar,
        })
    }
}

pub fn apply_channel(state: &GaussianState, ch: &GaussianChannel) -> Result<GaussianState> {
    if ch.input_modes() != state.modes() {
        return Err(Error::Shape(format!(
            "channel acts on {} modes, state has {}",
            ch.input_modes(),
            state.modes()
        )));
    }
    let sigma = &ch.t * &state.sigma * ch.t.transpose() + &ch.nmat;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(GaussianState {
        xbar: &ch.t * &state.xbar + &ch.zbar,
        sigma,
    })
}

/// Independent attenuators: T = ⊕ √κ_k 1₂, N = ⊕ (1 − κ_k) 1₂.
pub fn loss_channel(n: usize, kappa: &[f64]) -> Result<GaussianChannel> {
    if kappa.len() != n {
        return Err(Error::Shape(format!(
            "{} transmissivities for {n} modes",
            kappa.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidDimension(
            "loss channel needs at least one mode".into(),
        ));
    }
    let mut t = DMatrix::zeros(2 * n, 2 * n);
    let mut nmat = DMatrix::zeros(2 * n, 2 * n);
    for (k, &kp) in kappa.iter().enumerate() {
        if !(0.0..=1.0).contains(&kp) {
            return Err(Error::Domain(format!("transmissivity {kp} outside [0, 1]")));
        }
        for i in [2 * k, 2 * k + 1] {
            t[(i, i)] = kp.sqrt();
            nmat[(i, i)] = 1.0 - kp;
        }
    }
    Ok(GaussianChannel {
        t,
        nmat,
        zbar: DVector::zeros(2 * n),
    })
}

/// Change between two orthonormal mode bases u and v with U_kl = (v_l|u_k).
/// `o` maps quadratures in the u basis to the v basis: x_v = O x_u.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisChange {
    pub u: DMatrix<Complex64>,
    pub o: DMatrix<f64>,
}

impl BasisChange {
    pub fn channel(&self) -> GaussianChannel {
        let d = self.o.nrows();
        GaussianChannel {
            t: self.o.clone(),
            nmat: DMatrix::zeros(d, d),
            zbar: DVector::zeros(d),
        }
    }
}

pub fn basis_change_from_unitary(u: &DMatrix<Complex64>) -> Result<BasisChange> {
    basis_change_from_unitary_with(u, &Tolerances::default())
}

pub fn basis_change_from_unitary_with(
    u: &DMatrix<Complex64>,
    tol: &Tolerances,
) -> Result<BasisChange> {
    let n = u.nrows();
    if n == 0 || u.ncols() != n {
        return Err(Error::Shape(format!(
            "U is {}x{}, expected square",
            u.nrows(),
            u.ncols()
        )));
    }
    let dev = (u * u.adjoint() - DMatrix::<Complex64>::identity(n, n)).norm();
    if dev > tol.ortho {
        return Err(Error::Domain(format!(
            "U is not unitary (‖UU† − 1‖ = {dev:e})"
        )));
    }
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        for l in 0..n {
            set_block(&mut o, l, k, &embed(u[(k, l)]));
        }
    }
    Ok(BasisChange { u: u.clone(), o })
}

/// exp(−(x − x̄)ᵀσ⁻¹(x − x̄)/2) / ((2π)^N √det σ).
pub fn wigner_density(state: &GaussianState, x: &DVector<f64>) -> Result<f64> {
    check_len(x, state.xbar.len(), "phase-space point")?;
    let chol = state
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Decomposition {
            what: "covariance matrix is singular".into(),
            residual: f64::NAN,
        })?;
    let d = x - &state.xbar;
    let y = chol.solve(&d);
    let det = chol.determinant();
    let n = state.modes() as i32;
    Ok((-0.5 * d.dot(&y)).exp() / ((2.0 * std::f64::consts::PI).powi(n) * det.sqrt()))
}

/// σ⁻¹ of a validated state.
pub(crate) fn inverse_covariance(state: &GaussianState) -> Result<DMatrix<f64>> {
    spd_inverse(&state.sigma, "covariance matrix")
}

/// 2×2 block (j, k) of σ.
pub fn covariance_block(state: &GaussianState, j: usize, k: usize) -> Matrix2<f64> {
    block(&state.sigma, j, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::symplectic_eigenvalues;
    use approx::assert_relative_eq;

    #[test]
    fn stock_states() {
        let c = coherent(Complex64::new(1.0, 1.0));
        assert_eq!(c.xbar().as_slice(), &[2.0, 2.0]);
        let t = thermal(1.0).unwrap();
        assert_eq!(t.sigma()[(0, 0)], 3.0);
        let sv = squeezed_vacuum(1.0, 0.0).unwrap();
        assert_relative_eq!(sv.sigma()[(0, 0)], (-2.0f64).exp());
        assert_relative_eq!(sv.sigma()[(1, 1)], 2.0f64.exp());
        assert_eq!(
            squeezed_thermal(0.0, 0.3, 0.0).unwrap(),
            squeezed_vacuum(0.3, 0.0).unwrap()
        );
        let st = squeezed_thermal(1.0, 0.5, 0.0).unwrap();
        let ns = 0.5f64.sinh().powi(2);
        assert_relative_eq!(
            st.mean_photon_number(),
            1.0 + ns + 2.0 * ns,
            epsilon = 1e-12
        );
        assert_relative_eq!(st.mean_photon_number(), 1.814621, epsilon = 1e-6);
        assert!(matches!(thermal(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn make_state_validates() {
        assert!(make_state(DVector::zeros(2), DMatrix::identity(2, 2)).is_ok());
        let bad = make_state(DVector::zeros(2), DMatrix::from_diagonal_element(2, 2, 0.5));
        assert!(matches!(bad, Err(Error::Unphysical { .. })));
        assert!(matches!(
            make_state(DVector::zeros(3), DMatrix::identity(2, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn loss_examples() {
        let th = thermal(10.0).unwrap();
        let out = apply_channel(&th, &loss_channel(1, &[0.5]).unwrap()).unwrap();
        assert_relative_eq!(out.sigma()[(0, 0)], 11.0, epsilon = 1e-12);
        let out = apply_channel(&th, &loss_channel(1, &[0.0]).unwrap()).unwrap();
        assert_relative_eq!(out.sigma(), &DMatrix::identity(2, 2), epsilon = 1e-12);
        let vac = vacuum(1).unwrap();
        let out = apply_channel(&vac, &loss_channel(1, &[0.3]).unwrap()).unwrap();
        assert_relative_eq!(out.sigma(), vac.sigma(), epsilon = 1e-12);
        assert_eq!(
            loss_channel(1, &[1.0]).unwrap(),
            GaussianChannel::identity(1)
        );
        assert!(matches!(loss_channel(1, &[1.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn basis_change_examples() {
        let one = DMatrix::<Complex64>::identity(2, 2);
        assert_eq!(
            basis_change_from_unitary(&one).unwrap().o,
            DMatrix::identity(4, 4)
        );

        let phi = 0.7f64;
        let u = DMatrix::from_element(1, 1, Complex64::from_polar(1.0, phi));
        let o = basis_change_from_unitary(&u).unwrap().o;
        let rot = DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
        assert_relative_eq!(o, rot, epsilon = 1e-15);

        let z = Complex64::new(0.0, 0.0);
        let one_c = Complex64::new(1.0, 0.0);
        let isy = DMatrix::from_row_slice(2, 2, &[z, one_c, -one_c, z]);
        let o = basis_change_from_unitary(&isy).unwrap().o;
        let om = omega(2);
        assert_relative_eq!(o.transpose() * &om * &o, om, epsilon = 1e-15);
        assert_relative_eq!(&o * o.transpose(), DMatrix::identity(4, 4), epsilon = 1e-15);

        let bad = DMatrix::from_element(1, 1, Complex64::new(2.0, 0.0));
        assert!(matches!(
            basis_change_from_unitary(&bad),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn basis_change_preserves_spectrum() {
        let s = product_state(&[
            thermal(2.0).unwrap(),
            squeezed_thermal(0.5, 0.4, 0.2).unwrap(),
        ])
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(h, 0.0),
                Complex64::new(0.0, h),
                Complex64::new(0.0, h),
                Complex64::new(h, 0.0),
            ],
        );
        let bc = basis_change_from_unitary(&u).unwrap();
        let out = apply_channel(&s, &bc.channel()).unwrap();
        let a = symplectic_eigenvalues(s.sigma()).unwrap();
        let b = symplectic_eigenvalues(out.sigma()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn wigner_examples() {
        let vac = vacuum(1).unwrap();
        let w0 = wigner_density(&vac, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(w0, 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-15);
        let th = thermal(3.0).unwrap();
        let w = wigner_density(&th, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(w, 1.0 / (2.0 * std::f64::consts::PI * 7.0), epsilon = 1e-15);

        // crude 2D quadrature of a displaced squeezed state integrates to one
        let s = make_state(
            DVector::from_vec(vec![0.5, -0.3]),
            squeezed_thermal_covariance(0.4, 0.3, 0.5),
        )
        .unwrap();
        let h = 0.05;
        let mut total = 0.0;
        let mut peak = 0.0f64;
        for i in -300..=300 {
            for j in -300..=300 {
                let x = DVector::from_vec(vec![i as f64 * h, j as f64 * h]);
                let v = wigner_density(&s, &x).unwrap();
                peak = peak.max(v);
                total += v * h * h;
            }
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
        assert!(wigner_density(&s, s.xbar()).unwrap() >= peak);
    }

    #[test]
    fn json_round_trip() {
        let s = squeezed_thermal(0.3, 0.2, 0.1).unwrap();
        let back = GaussianState::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert!(GaussianState::from_json(r#"{"xbar":[0,0],"sigma":[[0.1,0],[0,0.1]]}"#).is_err());
        let ch = loss_channel(1, &[0.4]).unwrap();
        let text = serde_json::to_string(&ch).unwrap();
        let back: GaussianChannel = serde_json::from_str(&text).unwrap();
        assert_eq!(ch, back);
    }
}

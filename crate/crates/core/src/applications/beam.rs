//! Closed forms for the transverse displacement d of a beam whose mode u_0 may be
//! assisted by a populated derivative mode u_1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// η = ‖∂u_0‖, ξ = (∂u_1|u_0), ζ = ‖∂u_1 − ξu_0‖, all in 1/length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub eta: f64,
    pub xi: f64,
    pub zeta: f64,
}

impl BeamGeometry {
    /// Gaussian beam of waist w: η = 1/(√2w), ξ = −η, ζ = 1/w.
    pub fn gaussian(w: f64) -> Result<Self> {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!(
                "beam waist must be positive, got {w}"
            )));
        }
        let eta = 1.0 / (std::f64::consts::SQRT_2 * w);
        Ok(BeamGeometry {
            eta,
            xi: -eta,
            zeta: 1.0 / w,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.xi.is_finite() && self.zeta.is_finite()) {
            return Err(Error::Domain(
                "beam geometry constants must be finite".into(),
            ));
        }
        if self.eta < 0.0 || self.zeta < 0.0 {
            return Err(Error::Domain(
                "η and ζ are norms and cannot be negative".into(),
            ));
        }
        Ok(())
    }
}

/// Populations and explicit d-derivatives. u_0 holds N₀ photons; u_1 holds a
/// squeezed thermal state with N_T thermal photons and squeezing r (N_S = sinh²r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamScenario {
    pub geometry: BeamGeometry,
    pub n0: f64,
    #[serde(default)]
    pub nt: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub dn0: f64,
    #[serde(default)]
    pub dnt: f64,
    #[serde(default)]
    pub dr: f64,
}

impl BeamScenario {
    pub fn new(geometry: BeamGeometry, n0: f64) -> Self {
        BeamScenario {
            geometry,
            n0,
            nt: 0.0,
            r: 0.0,
            dn0: 0.0,
            dnt: 0.0,
            dr: 0.0,
        }
    }

    pub fn with_derivative_mode(mut self, nt: f64, r: f64) -> Self {
        self.nt = nt;
        self.r = r;
        self
    }

    pub fn with_dn0(mut self, dn0: f64) -> Self {
        self.dn0 = dn0;
        self
    }

    /// Derivative mode set from the squeezing fraction χ at total population N₁.
    pub fn from_chi(geometry: BeamGeometry, n0: f64, chi: f64, n1: f64) -> Result<Self> {
        let (ns, nt) = squeezing_split(chi, n1)?;
        Ok(BeamScenario::new(geometry, n0).with_derivative_mode(nt, ns.sqrt().asinh()))
    }

    pub fn ns(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// N₁ = N_T + N_S + 2N_TN_S
    pub fn n1(&self) -> f64 {
        let ns = self.ns();
        self.nt + ns + 2.0 * self.nt * ns
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        for (v, name) in [(self.n0, "N0"), (self.nt, "N_T")] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        for (v, name) in [
            (self.r, "r"),
            (self.dn0, "dN0"),
            (self.dnt, "dN_T"),
            (self.dr, "dr"),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// (N_S, N_T) = (χN₁, (1−χ)N₁/(1+2χN₁)).
pub fn squeezing_split(chi: f64, n1: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::Domain(format!(
            "squeezing fraction must lie in [0, 1], got {chi}"
        )));
    }
    if !(n1.is_finite() && n1 >= 0.0) {
        return Err(Error::Domain(format!("N1 must be non-negative, got {n1}")));
    }
    Ok((chi * n1, (1.0 - chi) * n1 / (1.0 + 2.0 * chi * n1)))
}

/// Inverse of [`squeezing_split`]: (χ, N₁). χ is reported as 0 when N₁ = 0.
pub fn squeezing_fraction(ns: f64, nt: f64) -> Result<(f64, f64)> {
    if !(ns >= 0.0 && nt >= 0.0 && ns.is_finite() && nt.is_finite()) {
        return Err(Error::Domain(format!(
            "N_S, N_T must be non-negative, got {ns}, {nt}"
        )));
    }
    let n1 = nt + ns + 2.0 * nt * ns;
    Ok((if n1 > 0.0 { ns / n1 } else { 0.0 }, n1))
}

/// (∂N₀)²/(N₀(N₀+1)), zero when ∂N₀ = 0.
fn population_term(n0: f64, dn0: f64) -> Result<f64> {
    if dn0 == 0.0 {
        return Ok(0.0);
    }
    if n0 == 0.0 {
        return Err(Error::Domain(
            "N0 = 0 with nonzero dN0 has no finite QFI".into(),
        ));
    }
    Ok(dn0 * dn0 / (n0 * (n0 + 1.0)))
}

/// |∂α|² = (∂N₀)²/N₀ for a coherent amplitude of fixed phase.
fn amplitude_term(n0: f64, dn0: f64) -> Result<f64> {
    if dn0 == 0.0 {
        return Ok(0.0);
    }
    if n0 == 0.0 {
        return Err(Error::Domain(
            "N0 = 0 with nonzero dN0 has no finite QFI".into(),
        ));
    }
    Ok(dn0 * dn0 / n0)
}

/// Coherent u_0, vacuum u_1: |∂α|² + 4η²N₀.
pub fn displacement_qfi_coherent(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    Ok(amplitude_term(s.n0, s.dn0)? + 4.0 * s.geometry.eta.powi(2) * s.n0)
}

/// Thermal u_0, vacuum u_1: (∂N₀)²/(N₀(N₀+1)) + 4η²N₀.
pub fn displacement_qfi_thermal(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    Ok(population_term(s.n0, s.dn0)? + 4.0 * s.geometry.eta.powi(2) * s.n0)
}

/// Thermal u_0, squeezed vacuum u_1 with N₁ = sinh²r. Requires N_T = 0.
pub fn displacement_qfi_thermal_squeezed(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    if s.nt != 0.0 {
        return Err(Error::Domain(
            "thermal-squeezed form needs N_T = 0; use the general form".into(),
        ));
    }
    let BeamGeometry { eta, xi, zeta } = s.geometry;
    let n0 = s.n0;
    let n1 = s.ns();
    Ok(population_term(n0, s.dn0)?
        + 4.0 * (n0 * eta - xi).powi(2) * n1 / (n0 + 1.0)
        + 4.0 * n0 * eta * eta * (n1 + 1.0)
        + 4.0 * zeta * zeta * n1)
}

/// Thermal u_0, squeezed thermal u_1.
///
/// The two fractions over 2N₀N_T + N₀ + N_T vanish with their numerators when
/// N₀ = N_T = 0 and are then dropped.
pub fn displacement_qfi_general(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    let BeamGeometry { eta, xi, zeta } = s.geometry;
    let (n0, nt, ns) = (s.n0, s.nt, s.ns());
    let den = 2.0 * n0 * nt + n0 + nt;
    let mut f = population_term(n0, s.dn0)?
        + 4.0 * ns * (xi * (nt + 1.0) - eta * n0).powi(2) / (den + 1.0)
        + 4.0 * ns * zeta * zeta * (nt + 1.0);
    if den > 0.0 {
        f += 4.0
            * (ns + 1.0)
            * (eta * eta * n0 * n0 + n0 * nt * (2.0 * eta * xi + zeta * zeta * (2.0 * nt + 1.0)))
            / den;
        f += 4.0 * nt * nt * (ns + 1.0) * (zeta * zeta + xi * xi) / den;
    }
    Ok(f)
}

/// Thermal u_0, thermal u_1 with N₁ = N_T photons. Requires r = 0.
pub fn displacement_qfi_thermal_thermal(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    if s.r != 0.0 {
        return Err(Error::Domain(
            "thermal-thermal form needs r = 0; use the general form".into(),
        ));
    }
    let BeamGeometry { eta, xi, zeta } = s.geometry;
    let (n0, n1) = (s.n0, s.nt);
    let den = 2.0 * n0 * n1 + n0 + n1;
    let mut f = population_term(n0, s.dn0)? + 4.0 * zeta * zeta * n1;
    if den > 0.0 {
        f += 4.0 * (eta * n0 + xi * n1).powi(2) / den;
    }
    Ok(f)
}

/// Real coherent amplitude in u_0, squeezed vacuum in u_1 squeezed along q.
/// 4N₀η²e^{2r} + 4(ξ² + ζ²)N₁, plus (∂N₀)²/N₀ when N₀ depends on d.
pub fn displacement_qfi_coherent_squeezed(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    if s.nt != 0.0 {
        return Err(Error::Domain("coherent-squeezed form needs N_T = 0".into()));
    }
    let BeamGeometry { eta, xi, zeta } = s.geometry;
    Ok(amplitude_term(s.n0, s.dn0)?
        + 4.0 * s.n0 * eta * eta * (2.0 * s.r).exp()
        + 4.0 * (xi * xi + zeta * zeta) * s.ns())
}

/// Coherent-squeezed QFI averaged over a uniformly random squeezing direction:
/// 4N₀η² cosh 2r + 4(ξ² + ζ²)N₁ (+ (∂N₀)²/N₀).
pub fn displacement_qfi_coherent_squeezed_average(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    if s.nt != 0.0 {
        return Err(Error::Domain("coherent-squeezed form needs N_T = 0".into()));
    }
    let BeamGeometry { eta, xi, zeta } = s.geometry;
    Ok(amplitude_term(s.n0, s.dn0)?
        + 4.0 * s.n0 * eta * eta * (2.0 * s.r).cosh()
        + 4.0 * (xi * xi + zeta * zeta) * s.ns())
}

/// Transmissivities of u_0 and u_1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub kappa0: f64,
    pub kappa1: f64,
}

/// Post-loss populations for pre-loss `s`:
/// N₀ = κ₀N₀ⁱⁿ, 2N_T + 1 = symplectic eigenvalue of the attenuated u_1 state,
/// sinh 2r = κ₁(2N_Tⁱⁿ + 1) sinh 2rⁱⁿ/(2N_T + 1). ∂N₀ is scaled by κ₀; ∂N_T and ∂r
/// are kept as given.
pub fn apply_loss_substitutions(s: &BeamScenario, loss: Loss) -> Result<BeamScenario> {
    s.validate()?;
    for k in [loss.kappa0, loss.kappa1] {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::Domain(format!(
                "transmissivity must lie in [0, 1], got {k}"
            )));
        }
    }
    let (nt, ns) = (s.nt, s.ns());
    let k1 = loss.kappa1;
    let m = 2.0 * ns * nt + nt + ns;
    let disc =
        (2.0 * k1 * m + 1.0).powi(2) - 4.0 * k1 * k1 * ns * (2.0 * nt + 1.0).powi(2) * (ns + 1.0);
    let nt_out = (0.5 * (disc.max(1.0).sqrt() - 1.0)).max(0.0);
    let s2r = k1 * (2.0 * nt + 1.0) / (2.0 * nt_out + 1.0) * (2.0 * s.r).sinh();
    Ok(BeamScenario {
        n0: loss.kappa0 * s.n0,
        dn0: loss.kappa0 * s.dn0,
        nt: nt_out,
        r: 0.5 * s2r.asinh(),
        ..*s
    })
}

/// Extra QFI when N_T and r of u_1 depend on d (e.g. d-dependent loss):
/// (∂N_T)²/(N_T(N_T+1)) + 4(2N_T+1)²(∂r)²/(4N_T(N_T+1) + 2).
pub fn parameter_dependent_loss_term(s: &BeamScenario) -> Result<f64> {
    s.validate()?;
    let nt = s.nt;
    let mut f = 4.0 * (2.0 * nt + 1.0).powi(2) * s.dr * s.dr / (4.0 * nt * (nt + 1.0) + 2.0);
    if s.dnt != 0.0 {
        if nt == 0.0 {
            return Err(Error::SingularSld {
                j: 1,
                k: 1,
                l: 2,
                coefficient: 2.0 * std::f64::consts::SQRT_2 * s.dnt,
                denominator: 0.0,
            });
        }
        f += s.dnt * s.dnt / (nt * (nt + 1.0));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g() -> BeamGeometry {
        BeamGeometry::gaussian(1.0).unwrap()
    }

    #[test]
    fn single_mode_examples() {
        let s = BeamScenario::new(g(), 10.0);
        assert_relative_eq!(
            displacement_qfi_coherent(&s).unwrap(),
            20.0,
            epsilon = 1e-13
        );
        assert_relative_eq!(displacement_qfi_thermal(&s).unwrap(), 20.0, epsilon = 1e-13);
        assert_eq!(
            displacement_qfi_coherent(&BeamScenario::new(g(), 0.0)).unwrap(),
            0.0
        );
        let flat = BeamGeometry {
            eta: 0.0,
            xi: 0.0,
            zeta: 0.0,
        };
        let s = BeamScenario::new(flat, 1.0).with_dn0(1.0);
        assert_relative_eq!(displacement_qfi_thermal(&s).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(displacement_qfi_coherent(&s).unwrap(), 1.0, epsilon = 1e-15);
        assert!(displacement_qfi_thermal(&BeamScenario::new(g(), 0.0).with_dn0(1.0)).is_err());
    }

    #[test]
    fn coherent_population_term_is_larger_by_n0_plus_one() {
        let flat = BeamGeometry {
            eta: 0.0,
            xi: 0.0,
            zeta: 0.0,
        };
        let s = BeamScenario::new(flat, 4.0).with_dn0(0.3);
        let ratio = displacement_qfi_coherent(&s).unwrap() / displacement_qfi_thermal(&s).unwrap();
        assert_relative_eq!(ratio, 5.0, epsilon = 1e-13);
    }

    #[test]
    fn special_cases_of_the_general_form() {
        for n0 in [0.0, 0.1, 1.0, 10.0] {
            for r in [0.0, 0.5, 1.0] {
                let s = BeamScenario::new(g(), n0).with_derivative_mode(0.0, r);
                assert_relative_eq!(
                    displacement_qfi_general(&s).unwrap(),
                    displacement_qfi_thermal_squeezed(&s).unwrap(),
                    max_relative = 1e-13
                );
            }
            for nt in [0.0, 0.5, 3.0] {
                let s = BeamScenario::new(g(), n0).with_derivative_mode(nt, 0.0);
                assert_relative_eq!(
                    displacement_qfi_general(&s).unwrap(),
                    displacement_qfi_thermal_thermal(&s).unwrap(),
                    max_relative = 1e-13
                );
            }
        }
        let s = BeamScenario::new(g(), 3.0);
        assert_relative_eq!(
            displacement_qfi_thermal_squeezed(&s).unwrap(),
            displacement_qfi_thermal(&s).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn chi_round_trip() {
        for chi in [0.0, 0.25, 0.5, 1.0] {
            for n1 in [0.01, 1.0, 100.0] {
                let (ns, nt) = squeezing_split(chi, n1).unwrap();
                let (c, n) = squeezing_fraction(ns, nt).unwrap();
                assert_relative_eq!(c, chi, epsilon = 1e-14);
                assert_relative_eq!(n, n1, max_relative = 1e-14);
                let s = BeamScenario::from_chi(g(), 1.0, chi, n1).unwrap();
                assert_relative_eq!(s.n1(), n1, max_relative = 1e-10);
            }
        }
        assert!(squeezing_split(1.5, 1.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let s = BeamScenario::new(g(), 10.0).with_derivative_mode(0.4, 0.7);
        let same = apply_loss_substitutions(
            &s,
            Loss {
                kappa0: 1.0,
                kappa1: 1.0,
            },
        )
        .unwrap();
        assert_relative_eq!(same.n0, 10.0);
        assert_relative_eq!(same.nt, 0.4, epsilon = 1e-12);
        assert_relative_eq!(same.r, 0.7, epsilon = 1e-12);
        let dark = apply_loss_substitutions(
            &s,
            Loss {
                kappa0: 0.5,
                kappa1: 0.0,
            },
        )
        .unwrap();
        assert_relative_eq!(dark.n0, 5.0);
        assert_eq!(dark.nt, 0.0);
        assert_eq!(dark.r, 0.0);
        assert!(apply_loss_substitutions(
            &s,
            Loss {
                kappa0: 1.2,
                kappa1: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn loss_term_examples() {
        let s = BeamScenario::new(g(), 1.0).with_derivative_mode(0.5, 0.3);
        assert_eq!(parameter_dependent_loss_term(&s).unwrap(), 0.0);
        let sq = BeamScenario {
            dr: 1.0,
            ..BeamScenario::new(g(), 1.0)
        };
        assert_relative_eq!(
            parameter_dependent_loss_term(&sq).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        let bad = BeamScenario {
            dnt: 1.0,
            ..BeamScenario::new(g(), 1.0)
        };
        assert!(matches!(
            parameter_dependent_loss_term(&bad),
            Err(Error::SingularSld { .. })
        ));
    }
}

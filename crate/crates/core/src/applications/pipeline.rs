//! The closed forms recomputed by the general mode-encoded pipeline. These are the
//! independent counterparts used for cross-validation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::beam::{self, BeamGeometry, BeamScenario, Loss};
use super::pulse::{self, pulse_coherent_means, pulse_mode_constants_quadrature, PulseConstants};
use crate::error::{Error, Result};
use crate::modes::{
    mode_encoded_qfi_with, AnalyticFamily, ModeEncodedProblem, ModeFamily, PulsePairFamily,
    PulseShape,
};
use crate::qfi::QfiBreakdown;
use crate::states::{
    apply_channel, coherent, loss_channel, product_state, squeezed_thermal, thermal, GaussianState,
};
use crate::tolerance::Tolerances;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// u_0 alone (`with_derivative_mode = false`) or u_0, u_1 with
/// ∂u_0 = ηu_1 and ∂u_1 = ξu_0 + ζu_2.
pub fn beam_family(g: BeamGeometry, with_derivative_mode: bool) -> AnalyticFamily<'static> {
    if !with_derivative_mode {
        return AnalyticFamily::new(1, |_, _, _| c(0.0), move |_, _, _| c(g.eta * g.eta));
    }
    AnalyticFamily::new(
        2,
        move |k, l, _| match (k, l) {
            (0, 1) => c(g.eta),
            (1, 0) => c(g.xi),
            _ => c(0.0),
        },
        move |k, l, _| match (k, l) {
            (0, 0) => c(g.eta * g.eta),
            (1, 1) => c(g.xi * g.xi + g.zeta * g.zeta),
            _ => c(0.0),
        },
    )
}

fn solve(
    family: &dyn ModeFamily,
    theta: f64,
    state: &GaussianState,
    dv: DMatrix<f64>,
    dx: DVector<f64>,
) -> Result<QfiBreakdown> {
    let p = ModeEncodedProblem::new(family, theta, state).with_derivatives(dv, dx);
    mode_encoded_qfi_with(&p, &Tolerances::default())
}

/// ∂V for a thermal u_0 whose population changes by ∂N₀, padded to `modes`.
fn population_change(dn0: f64, modes: usize) -> DMatrix<f64> {
    let mut dv = DMatrix::zeros(2 * modes, 2 * modes);
    dv[(0, 0)] = 2.0 * dn0;
    dv[(1, 1)] = 2.0 * dn0;
    dv
}

/// Mean-field change of a real coherent amplitude √N₀.
fn amplitude_change(n0: f64, dn0: f64, modes: usize) -> Result<DVector<f64>> {
    let mut dx = DVector::zeros(2 * modes);
    if dn0 != 0.0 {
        if n0 == 0.0 {
            return Err(Error::Domain(
                "N0 = 0 with nonzero dN0 has no finite QFI".into(),
            ));
        }
        dx[0] = dn0 / n0.sqrt();
    }
    Ok(dx)
}

pub fn beam_coherent_pipeline(s: &BeamScenario) -> Result<QfiBreakdown> {
    s.validate()?;
    let fam = beam_family(s.geometry, false);
    let st = coherent(c(s.n0.sqrt()));
    solve(
        &fam,
        0.0,
        &st,
        DMatrix::zeros(2, 2),
        amplitude_change(s.n0, s.dn0, 1)?,
    )
}

pub fn beam_thermal_pipeline(s: &BeamScenario) -> Result<QfiBreakdown> {
    s.validate()?;
    let fam = beam_family(s.geometry, false);
    solve(
        &fam,
        0.0,
        &thermal(s.n0)?,
        population_change(s.dn0, 1),
        DVector::zeros(2),
    )
}

/// Thermal u_0 and squeezed thermal u_1 (covers the thermal-squeezed, general and
/// thermal-thermal forms).
pub fn beam_thermal_general_pipeline(s: &BeamScenario) -> Result<QfiBreakdown> {
    s.validate()?;
    let fam = beam_family(s.geometry, true);
    let st = product_state(&[thermal(s.n0)?, squeezed_thermal(s.nt, s.r, 0.0)?])?;
    solve(
        &fam,
        0.0,
        &st,
        population_change(s.dn0, 2),
        DVector::zeros(4),
    )
}

/// Real coherent u_0 and squeezed vacuum u_1 with squeezing rotated by `angle`.
pub fn beam_coherent_squeezed_pipeline(s: &BeamScenario, angle: f64) -> Result<QfiBreakdown> {
    s.validate()?;
    let fam = beam_family(s.geometry, true);
    let st = product_state(&[
        coherent(c(s.n0.sqrt())),
        squeezed_thermal(s.nt, s.r, angle)?,
    ])?;
    solve(
        &fam,
        0.0,
        &st,
        DMatrix::zeros(4, 4),
        amplitude_change(s.n0, s.dn0, 2)?,
    )
}

/// Mean of [`beam_coherent_squeezed_pipeline`] over 8 equally spaced squeezing
/// angles; exact for the uniform average since the QFI is a degree-2 trigonometric
/// polynomial in the angle.
pub fn beam_coherent_squeezed_average_pipeline(s: &BeamScenario) -> Result<f64> {
    let k = 8;
    let mut sum = 0.0;
    for i in 0..k {
        let angle = std::f64::consts::PI * i as f64 / k as f64;
        sum += beam_coherent_squeezed_pipeline(s, angle)?.total;
    }
    Ok(sum / k as f64)
}

/// Pre-loss state sent through independent attenuators, then the pipeline.
/// ∂N₀ is applied after loss as κ₀∂N₀ⁱⁿ.
pub fn beam_loss_pipeline(s: &BeamScenario, loss: Loss) -> Result<QfiBreakdown> {
    s.validate()?;
    let fam = beam_family(s.geometry, true);
    let input = product_state(&[thermal(s.n0)?, squeezed_thermal(s.nt, s.r, 0.0)?])?;
    let out = apply_channel(&input, &loss_channel(2, &[loss.kappa0, loss.kappa1])?)?;
    solve(
        &fam,
        0.0,
        &out,
        population_change(loss.kappa0 * s.dn0, 2),
        DVector::zeros(4),
    )
}

fn pulse_family(shape: &PulseShape) -> Result<PulsePairFamily> {
    PulsePairFamily::new(*shape, true)
}

fn pulse_inputs(n0: f64, tau: f64, shape: &PulseShape) -> Result<PulseConstants> {
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(Error::Domain(format!("N0 must be non-negative, got {n0}")));
    }
    pulse_mode_constants_quadrature(shape, tau)
}

/// Thermal u_0, v_0 with N₀(1 ± δ) photons, q-squeezed vacua in u_1, v_1. The only
/// closed-form input is δ and ∂δ, taken by quadrature.
pub fn pulse_thermal_squeezed_pipeline(
    shape: &PulseShape,
    tau: f64,
    n0: f64,
    r: f64,
) -> Result<QfiBreakdown> {
    let k = pulse_inputs(n0, tau, shape)?;
    let fam = pulse_family(shape)?;
    let sq = squeezed_thermal(0.0, r, 0.0)?;
    let st = product_state(&[
        thermal(n0 * (1.0 + k.delta))?,
        thermal(n0 * k.one_minus_delta)?,
        sq.clone(),
        sq,
    ])?;
    let mut dv = DMatrix::zeros(8, 8);
    for i in 0..2 {
        dv[(i, i)] = 2.0 * n0 * k.d_delta;
        dv[(2 + i, 2 + i)] = -2.0 * n0 * k.d_delta;
    }
    solve(&fam, tau, &st, dv, DVector::zeros(8))
}

/// Coherent pulses √N₀ and √N₀e^{iφ}, q-squeezed vacua in u_1, v_1.
pub fn pulse_coherent_squeezed_pipeline(
    shape: &PulseShape,
    tau: f64,
    n0: f64,
    r: f64,
    phi: f64,
) -> Result<QfiBreakdown> {
    let k = pulse_inputs(n0, tau, shape)?;
    let fam = pulse_family(shape)?;
    let (xu, xv) = pulse_coherent_means(n0, phi, &k);
    let sq = squeezed_thermal(0.0, r, 0.0)?;
    let mut st = product_state(&[thermal(0.0)?, thermal(0.0)?, sq.clone(), sq])?;
    let xbar = DVector::from_vec(vec![xu[0], xu[1], xv[0], xv[1], 0.0, 0.0, 0.0, 0.0]);
    st = crate::states::make_state(xbar, st.sigma().clone())?;
    // x_u ∝ √(1+δ), x_v ∝ √(1−δ)
    let mut dx = DVector::zeros(8);
    if n0 > 0.0 {
        let gu = 0.5 * k.d_delta / (1.0 + k.delta);
        let gv = -0.5 * k.d_delta / k.one_minus_delta;
        for i in 0..2 {
            dx[i] = gu * xu[i];
            dx[2 + i] = gv * xv[i];
        }
    }
    solve(&fam, tau, &st, DMatrix::zeros(8, 8), dx)
}

/// A closed form together with its inputs; evaluable either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum ClosedForm {
    BeamCoherent(BeamScenario),
    BeamThermal(BeamScenario),
    BeamThermalSqueezed(BeamScenario),
    BeamGeneral(BeamScenario),
    BeamThermalThermal(BeamScenario),
    BeamCoherentSqueezed(BeamScenario),
    BeamCoherentSqueezedAverage(BeamScenario),
    BeamLoss {
        scenario: BeamScenario,
        loss: Loss,
    },
    PulseThermalSqueezed {
        shape: PulseShape,
        tau: f64,
        n0: f64,
        #[serde(default)]
        r: f64,
    },
    PulseCoherentSqueezed {
        shape: PulseShape,
        tau: f64,
        n0: f64,
        #[serde(default)]
        r: f64,
        #[serde(default)]
        phi: f64,
    },
}

impl ClosedForm {
    pub fn name(&self) -> &'static str {
        match self {
            ClosedForm::BeamCoherent(_) => "beam-coherent",
            ClosedForm::BeamThermal(_) => "beam-thermal",
            ClosedForm::BeamThermalSqueezed(_) => "beam-thermal-squeezed",
            ClosedForm::BeamGeneral(_) => "beam-general",
            ClosedForm::BeamThermalThermal(_) => "beam-thermal-thermal",
            ClosedForm::BeamCoherentSqueezed(_) => "beam-coherent-squeezed",
            ClosedForm::BeamCoherentSqueezedAverage(_) => "beam-coherent-squeezed-average",
            ClosedForm::BeamLoss { .. } => "beam-loss",
            ClosedForm::PulseThermalSqueezed { .. } => "pulse-thermal-squeezed",
            ClosedForm::PulseCoherentSqueezed { .. } => "pulse-coherent-squeezed",
        }
    }

    pub fn value(&self) -> Result<f64> {
        match self {
            ClosedForm::BeamCoherent(s) => beam::displacement_qfi_coherent(s),
            ClosedForm::BeamThermal(s) => beam::displacement_qfi_thermal(s),
            ClosedForm::BeamThermalSqueezed(s) => beam::displacement_qfi_thermal_squeezed(s),
            ClosedForm::BeamGeneral(s) => beam::displacement_qfi_general(s),
            ClosedForm::BeamThermalThermal(s) => beam::displacement_qfi_thermal_thermal(s),
            ClosedForm::BeamCoherentSqueezed(s) => beam::displacement_qfi_coherent_squeezed(s),
            ClosedForm::BeamCoherentSqueezedAverage(s) => {
                beam::displacement_qfi_coherent_squeezed_average(s)
            }
            ClosedForm::BeamLoss { scenario, loss } => {
                beam::displacement_qfi_general(&beam::apply_loss_substitutions(scenario, *loss)?)
            }
            ClosedForm::PulseThermalSqueezed { shape, tau, n0, r } => {
                pulse::pulse_qfi_thermal_squeezed(
                    *n0,
                    *r,
                    &pulse::pulse_mode_constants(shape, *tau)?,
                )
            }
            ClosedForm::PulseCoherentSqueezed {
                shape,
                tau,
                n0,
                r,
                phi,
            } => pulse::pulse_qfi_coherent_squeezed(
                *n0,
                *r,
                *phi,
                &pulse::pulse_mode_constants(shape, *tau)?,
            ),
        }
    }

    pub fn pipeline(&self) -> Result<f64> {
        Ok(match self {
            ClosedForm::BeamCoherent(s) => beam_coherent_pipeline(s)?.total,
            ClosedForm::BeamThermal(s) => beam_thermal_pipeline(s)?.total,
            ClosedForm::BeamThermalSqueezed(s)
            | ClosedForm::BeamGeneral(s)
            | ClosedForm::BeamThermalThermal(s) => beam_thermal_general_pipeline(s)?.total,
            ClosedForm::BeamCoherentSqueezed(s) => beam_coherent_squeezed_pipeline(s, 0.0)?.total,
            ClosedForm::BeamCoherentSqueezedAverage(s) => {
                beam_coherent_squeezed_average_pipeline(s)?
            }
            ClosedForm::BeamLoss { scenario, loss } => beam_loss_pipeline(scenario, *loss)?.total,
            ClosedForm::PulseThermalSqueezed { shape, tau, n0, r } => {
                pulse_thermal_squeezed_pipeline(shape, *tau, *n0, *r)?.total
            }
            ClosedForm::PulseCoherentSqueezed {
                shape,
                tau,
                n0,
                r,
                phi,
            } => pulse_coherent_squeezed_pipeline(shape, *tau, *n0, *r, *phi)?.total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::applications::pulse::{gaussian_pulse_constants, sld_coefficients};
    use approx::assert_relative_eq;

    fn g() -> BeamGeometry {
        BeamGeometry::gaussian(1.0).unwrap()
    }

    fn agree(form: ClosedForm) {
        let a = form.value().unwrap();
        let b = form.pipeline().unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-12);
    }

    #[test]
    fn beam_forms_match_pipeline() {
        for n0 in [0.1, 1.0, 10.0] {
            for r in [0.0, 0.5, 1.0] {
                let s = BeamScenario::new(g(), n0)
                    .with_derivative_mode(0.0, r)
                    .with_dn0(0.3);
                agree(ClosedForm::BeamThermalSqueezed(s));
                agree(ClosedForm::BeamCoherentSqueezed(s));
                agree(ClosedForm::BeamCoherentSqueezedAverage(s));
                for nt in [0.0, 0.5] {
                    agree(ClosedForm::BeamGeneral(s.with_derivative_mode(nt, r)));
                }
            }
            let s = BeamScenario::new(g(), n0).with_dn0(-0.2);
            agree(ClosedForm::BeamCoherent(s));
            agree(ClosedForm::BeamThermal(s));
            agree(ClosedForm::BeamThermalThermal(
                s.with_derivative_mode(0.7, 0.0),
            ));
        }
    }

    #[test]
    fn beam_forms_with_unrelated_constants() {
        let geo = BeamGeometry {
            eta: 0.4,
            xi: 0.9,
            zeta: 1.7,
        };
        let s = BeamScenario::new(geo, 2.0).with_derivative_mode(0.3, 0.6);
        agree(ClosedForm::BeamGeneral(s));
        agree(ClosedForm::BeamThermalThermal(
            s.with_derivative_mode(0.3, 0.0),
        ));
    }

    #[test]
    fn loss_matches_channel() {
        let s = BeamScenario::new(g(), 3.0)
            .with_derivative_mode(0.2, 0.8)
            .with_dn0(0.1);
        for k0 in [0.3, 1.0] {
            for k1 in [0.3, 0.7, 1.0] {
                agree(ClosedForm::BeamLoss {
                    scenario: s,
                    loss: Loss {
                        kappa0: k0,
                        kappa1: k1,
                    },
                });
            }
        }
    }

    #[test]
    fn pulse_forms_match_pipeline() {
        let shape = PulseShape::Gaussian { width: 1.0 };
        for tau in [0.1, 1.0, 5.0] {
            for (n0, r) in [(1.0, 0.5), (0.1, 1.0), (10.0, 0.0)] {
                agree(ClosedForm::PulseThermalSqueezed { shape, tau, n0, r });
                for phi in [0.0, 1.0, std::f64::consts::PI] {
                    agree(ClosedForm::PulseCoherentSqueezed {
                        shape,
                        tau,
                        n0,
                        r,
                        phi,
                    });
                }
            }
        }
    }

    #[test]
    fn sech_pulses_match_pipeline() {
        let shape = PulseShape::Sech { width: 1.0 };
        agree(ClosedForm::PulseThermalSqueezed {
            shape,
            tau: 0.7,
            n0: 1.0,
            r: 0.5,
        });
        agree(ClosedForm::PulseCoherentSqueezed {
            shape,
            tau: 0.7,
            n0: 1.0,
            r: 0.5,
            phi: 2.0,
        });
    }

    #[test]
    fn coefficient_table_matches_pipeline_table() {
        let shape = PulseShape::Gaussian { width: 1.0 };
        let (n0, r) = (1.0, 0.5);
        let f = pulse_thermal_squeezed_pipeline(&shape, 1.0, n0, r).unwrap();
        let ac = sld_coefficients(n0, r, &gaussian_pulse_constants(1.0, 1.0).unwrap()).unwrap();
        let listed = ac.entries();
        for e in &listed {
            assert_relative_eq!(
                f.coefficient(e.j, e.k, e.l).powi(2),
                e.squared,
                max_relative = 1e-7,
                epsilon = 1e-10
            );
        }
        for t in &f.terms {
            if !listed.iter().any(|e| (e.j, e.k, e.l) == (t.j, t.k, t.l)) {
                assert!(t.coefficient.abs() < 1e-8, "unexpected entry {t:?}");
            }
        }
    }

    #[test]
    fn closed_form_json_round_trip() {
        let f = ClosedForm::PulseCoherentSqueezed {
            shape: PulseShape::Sech { width: 2.0 },
            tau: 1.0,
            n0: 1.0,
            r: 0.5,
            phi: 0.1,
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<ClosedForm>(&s).unwrap(), f);
        let b: ClosedForm = serde_json::from_str(
            r#"{"form":"beam-thermal","geometry":{"eta":1,"xi":0,"zeta":0},"n0":2}"#,
        )
        .unwrap();
        assert_relative_eq!(b.value().unwrap(), 8.0);
    }
}

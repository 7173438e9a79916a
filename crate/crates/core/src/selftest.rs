//! Reduced-density versions of the cross-validation suites, for the CLI.

use serde::Serialize;

use crate::applications::pulse::{
    coherent_small_separation_limit, pulse_qfi_coherent_squeezed, pulse_qfi_thermal_squeezed,
    thermal_large_separation_limit, thermal_small_separation_limit, LimitForm,
};
use crate::applications::{
    displacement_qfi_coherent, displacement_qfi_thermal, gaussian_pulse_constants,
    pulse_mode_constants_quadrature, BeamGeometry, BeamScenario, ClosedForm, Loss, PulseConstants,
};
use crate::error::Result;
use crate::modes::PulseShape;
use crate::sweep::{map, Execution};

/// Deliberate corruption used to check that the suites catch errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the Gaussian ζ_u by 1.01.
    PulseConstant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    /// Relative tolerance for every comparison.
    pub tol: f64,
    pub fault: Option<Fault>,
    pub exec: Execution,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            tol: 1e-6,
            fault: None,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub max_residual: f64,
    pub passed: bool,
    /// Description of the first check, in suite order, that exceeded the tolerance.
    pub first_failure: Option<String>,
}

struct Check {
    label: String,
    residual: Result<f64>,
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn report(name: &'static str, checks: Vec<Check>, tol: f64) -> SuiteReport {
    let mut max_residual = 0.0f64;
    let mut first_failure = None;
    for c in &checks {
        match &c.residual {
            Ok(r) => {
                max_residual = max_residual.max(*r);
                if !(*r <= tol) && first_failure.is_none() {
                    first_failure = Some(format!("{} (residual {r:.3e})", c.label));
                }
            }
            Err(e) => {
                if first_failure.is_none() {
                    first_failure = Some(format!("{}: {e}", c.label));
                }
            }
        }
    }
    SuiteReport {
        name,
        checks: checks.len(),
        max_residual,
        passed: first_failure.is_none(),
        first_failure,
    }
}

fn gaussian(tau: f64, fault: Option<Fault>) -> Result<PulseConstants> {
    let mut c = gaussian_pulse_constants(1.0, tau)?;
    if fault == Some(Fault::PulseConstant) {
        c.zeta_u *= 1.01;
    }
    Ok(c)
}

const TAUS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

fn pulse_constants_suite(opts: &SelftestOptions) -> SuiteReport {
    let shape = PulseShape::Gaussian { width: 1.0 };
    let checks = map(&TAUS, opts.exec, |&tau| {
        let residual = (|| {
            let g = gaussian(tau, opts.fault)?;
            let q = pulse_mode_constants_quadrature(&shape, tau)?;
            let pairs = [
                (g.delta, q.delta),
                (g.d_delta, q.d_delta),
                (g.eta_u, q.eta_u),
                (g.eta_v, q.eta_v),
                (g.xi_u, q.xi_u),
                (g.xi_v, q.xi_v),
                (g.zeta_u, q.zeta_u),
                (g.zeta_v, q.zeta_v),
            ];
            Ok(pairs
                .iter()
                .map(|&(a, b)| relative(a, b))
                .fold(0.0, f64::max))
        })();
        Check {
            label: format!("closed-form vs quadrature constants at tau/w = {tau}"),
            residual,
        }
    });
    report("pulse-constants", checks, opts.tol)
}

fn oracle_suite(opts: &SelftestOptions) -> SuiteReport {
    let geo = BeamGeometry::gaussian(1.0).expect("unit waist");
    let shape = PulseShape::Gaussian { width: 1.0 };
    let mut cases: Vec<ClosedForm> = Vec::new();
    for n0 in [0.1, 10.0] {
        for r in [0.0, 1.0] {
            let s = BeamScenario::new(geo, n0).with_derivative_mode(0.0, r);
            cases.push(ClosedForm::BeamThermalSqueezed(s));
            cases.push(ClosedForm::BeamCoherentSqueezed(s));
            cases.push(ClosedForm::BeamCoherentSqueezedAverage(s));
            cases.push(ClosedForm::BeamGeneral(s.with_derivative_mode(0.5, r)));
            cases.push(ClosedForm::BeamLoss {
                scenario: s.with_derivative_mode(0.5, r),
                loss: Loss {
                    kappa0: 0.7,
                    kappa1: 0.3,
                },
            });
        }
        let s = BeamScenario::new(geo, n0).with_dn0(0.5);
        cases.push(ClosedForm::BeamCoherent(s));
        cases.push(ClosedForm::BeamThermal(s));
        cases.push(ClosedForm::BeamThermalThermal(
            s.with_derivative_mode(0.5, 0.0),
        ));
    }
    for tau in [0.1, 1.0, 5.0] {
        for (n0, r) in [(1.0, 0.5), (10.0, 1.0)] {
            cases.push(ClosedForm::PulseThermalSqueezed { shape, tau, n0, r });
            cases.push(ClosedForm::PulseCoherentSqueezed {
                shape,
                tau,
                n0,
                r,
                phi: 1.0,
            });
        }
    }
    let fault = opts.fault;
    let checks = map(&cases, opts.exec, |form| {
        let residual = (|| {
            let closed = match *form {
                ClosedForm::PulseThermalSqueezed { tau, n0, r, .. } if fault.is_some() => {
                    pulse_qfi_thermal_squeezed(n0, r, &gaussian(tau, fault)?)?
                }
                ClosedForm::PulseCoherentSqueezed {
                    tau, n0, r, phi, ..
                } if fault.is_some() => {
                    pulse_qfi_coherent_squeezed(n0, r, phi, &gaussian(tau, fault)?)?
                }
                _ => form.value()?,
            };
            Ok(relative(closed, form.pipeline()?))
        })();
        Check {
            label: format!(
                "{} {}",
                form.name(),
                serde_json::to_string(form).unwrap_or_default()
            ),
            residual,
        }
    });
    report("oracle-equivalence", checks, opts.tol)
}

fn limits_suite(opts: &SelftestOptions) -> SuiteReport {
    let fault = opts.fault;
    let mut checks = Vec::new();
    let mut push = |label: String, residual: Result<f64>| checks.push(Check { label, residual });
    for n0 in [0.5, 1.0, 5.0] {
        for r in [0.0, 0.5, 1.0] {
            let near = gaussian(1e-3, fault).and_then(|c| {
                let f = pulse_qfi_thermal_squeezed(n0, r, &c)?;
                // the near-zero comparison carries an O(τ²) bias of its own
                Ok((relative(f, thermal_small_separation_limit(n0, c.dk2)) - 1e-4).max(0.0))
            });
            push(format!("thermal tau -> 0 at N0 = {n0}, r = {r}"), near);
            let far = gaussian(30.0, fault).and_then(|c| {
                let f = pulse_qfi_thermal_squeezed(n0, r, &c)?;
                Ok(relative(
                    f,
                    thermal_large_separation_limit(LimitForm::Exact, n0, r, c.dk2, c.sigma4),
                ))
            });
            push(
                format!("thermal tau -> infinity at N0 = {n0}, r = {r}"),
                far,
            );
            let coh = gaussian(0.0, fault).and_then(|c| {
                let pi = std::f64::consts::PI;
                let a = pulse_qfi_coherent_squeezed(n0, r, 0.0, &c)?;
                let b = pulse_qfi_coherent_squeezed(n0, r, pi, &c)?;
                Ok(a.abs()
                    .max(relative(b, coherent_small_separation_limit(n0, pi, c.dk2))))
            });
            push(format!("coherent tau = 0 at N0 = {n0}, r = {r}"), coh);
        }
        let s = BeamScenario::new(BeamGeometry::gaussian(1.0).expect("unit waist"), n0);
        push(
            format!("thermal = coherent beam at N0 = {n0}"),
            displacement_qfi_thermal(&s)
                .and_then(|a| Ok(relative(a, displacement_qfi_coherent(&s)?))),
        );
    }
    report("limits", checks, opts.tol)
}

/// Suites in order: pulse-constants, oracle-equivalence, limits.
pub fn run_selftest(opts: &SelftestOptions) -> Vec<SuiteReport> {
    vec![
        pulse_constants_suite(opts),
        oracle_suite(opts),
        limits_suite(opts),
    ]
}

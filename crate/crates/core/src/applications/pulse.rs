//! Separation τ between two copies of a real, even pulse shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{ModeFamily, PulsePairFamily, PulseShape, Rule, Samples};

/// Overlap data of the pulse pair at separation τ and the derived mode constants.
///
/// σ₄ is ∫(u″)². `one_minus_delta` is 1 − δ without cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConstants {
    pub tau: f64,
    pub delta: f64,
    pub one_minus_delta: f64,
    pub d_delta: f64,
    pub dd_delta: f64,
    pub beta: f64,
    pub d_beta: f64,
    pub dk2: f64,
    pub sigma4: f64,
    pub epsilon: f64,
    pub eta_u: f64,
    pub eta_v: f64,
    pub xi_u: f64,
    pub xi_v: f64,
    pub zeta_u: f64,
    pub zeta_v: f64,
    pub flags: ConstantFlags,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantFlags {
    /// Small-X Taylor series were used.
    pub series: bool,
    /// e^{−X}-scaled large-X forms were used.
    pub scaled: bool,
    /// δ underflowed to zero.
    pub underflow: bool,
    /// Evaluated by quadrature rather than closed forms.
    pub quadrature: bool,
    /// Quadrature at τ < 0.02w: ζ_v and ξ_v come from cancelling O(1/τ) terms and
    /// keep only about 1e-6 relative accuracy, less as τ shrinks.
    #[serde(default)]
    pub cancellation: bool,
}

/// Below this X = τ²/4w² the Gaussian ζ and η_v forms switch to series.
const SERIES_SWITCH: f64 = 2.0;

/// Σ_{k odd ≥ k0} c(k) X^k with c(k) from `coef`; enough terms for X < 2.
fn odd_series(x: f64, k0: usize, coef: impl Fn(f64, f64, f64, f64) -> f64) -> f64 {
    let mut sum = 0.0;
    // 1/k!, 1/(k−1)!, 1/(k−2)!
    let mut fact = [1.0f64; 3];
    let mut f = 1.0;
    for k in 1..=80usize {
        f /= k as f64;
        fact = [f, fact[0], fact[1]];
        if k >= k0 && k % 2 == 1 {
            let c = coef(2f64.powi(k as i32 + 1), fact[0], fact[1], fact[2]);
            let t = c * x.powi(k as i32);
            sum += t;
            if k > 20 && t.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
    }
    sum
}

/// sinh X − X
fn sinh_minus_x(x: f64) -> f64 {
    if x < SERIES_SWITCH {
        odd_series(x, 3, |_, f, _, _| f)
    } else {
        x.sinh() - x
    }
}

/// Closed forms for u(t) = exp(−t²/2w²)/(πw²)^{1/4}, stabilised near τ = 0 and at large τ.
pub fn gaussian_pulse_constants(width: f64, tau: f64) -> Result<PulseConstants> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Domain(format!(
            "pulse width must be positive, got {width}"
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Domain(format!(
            "pulse separation must be non-negative, got {tau}"
        )));
    }
    let w2 = width * width;
    let a = 1.0 / (4.0 * w2);
    let x = a * tau * tau;
    let delta = (-x).exp();
    let d_delta = -2.0 * a * tau * delta;
    let dd_delta = (4.0 * a * a * tau * tau - 2.0 * a) * delta;
    let d_beta = (8.0 * a.powi(3) * tau.powi(3) - 12.0 * a * a * tau) * delta;
    let epsilon =
        (16.0 * a.powi(4) * tau.powi(4) - 48.0 * a.powi(3) * tau * tau + 12.0 * a * a) * delta;
    let mut flags = ConstantFlags {
        underflow: delta == 0.0,
        ..ConstantFlags::default()
    };

    let (eta_u2, eta_v2, zeta_u2, zeta_v2);
    if x == 0.0 {
        (eta_u2, eta_v2, zeta_u2, zeta_v2) = (0.0, 0.0, 0.0, 0.0);
    } else if x < SERIES_SWITCH {
        flags.series = true;
        let h = 0.5 * x;
        eta_u2 = (tau * tau / h.cosh().powi(2) + 8.0 * w2 * h.tanh()) / (64.0 * w2 * w2);
        eta_v2 = sinh_minus_x(x) / (16.0 * w2 * h.sinh().powi(2));
        let nu = odd_series(x, 3, |p, f0, f1, f2| {
            p * f0 - 4.0 * f1 + 4.0 * f2 + 4.0 * f0
        });
        let nv = odd_series(x, 7, |p, f0, f1, f2| {
            p * f0 + 4.0 * f1 - 4.0 * f2 - 4.0 * f0
        });
        zeta_u2 = nu / (16.0 * w2 * (x + x.sinh()).powi(2));
        zeta_v2 = nv / (16.0 * w2 * sinh_minus_x(x).powi(2));
    } else {
        flags.scaled = true;
        // every hyperbolic function multiplied by e^{−X} (or e^{−2X} for squares)
        let e1 = (-x).exp();
        let e2 = e1 * e1;
        let sh = 0.5 * (1.0 - e2);
        let ch = 0.5 * (1.0 + e2);
        let sh_half = 0.5 * (1.0 - e1);
        eta_u2 = (x * e1 + sh) / (16.0 * w2 * 0.25 * (1.0 + e1).powi(2));
        eta_v2 = (sh - x * e1) / (16.0 * w2 * sh_half * sh_half);
        let sh2 = 0.5 * (1.0 - e2 * e2);
        let nu =
            2.0 * sh2 - 4.0 * x * e2 - 4.0 * x * ch * e1 + 4.0 * x * x * sh * e1 + 4.0 * sh * e1;
        let nv =
            2.0 * sh2 - 4.0 * x * e2 + 4.0 * x * ch * e1 - 4.0 * x * x * sh * e1 - 4.0 * sh * e1;
        zeta_u2 = nu / (16.0 * w2 * (x * e1 + sh).powi(2));
        zeta_v2 = nv / (16.0 * w2 * (sh - x * e1).powi(2));
    }
    let eta_u = eta_u2.max(0.0).sqrt();
    let eta_v = eta_v2.max(0.0).sqrt();
    Ok(PulseConstants {
        tau,
        delta,
        one_minus_delta: -(-x).exp_m1(),
        d_delta,
        dd_delta,
        beta: -dd_delta,
        d_beta,
        dk2: 2.0 * a,
        sigma4: 12.0 * a * a,
        epsilon,
        eta_u,
        eta_v,
        xi_u: -eta_u,
        xi_v: -eta_v,
        zeta_u: zeta_u2.max(0.0).sqrt(),
        zeta_v: zeta_v2.max(0.0).sqrt(),
        flags,
    })
}

/// Closed forms for Gaussian pulses, quadrature otherwise.
pub fn pulse_mode_constants(shape: &PulseShape, tau: f64) -> Result<PulseConstants> {
    match *shape {
        PulseShape::Gaussian { width } => gaussian_pulse_constants(width, tau),
        _ => pulse_mode_constants_quadrature(shape, tau),
    }
}

fn wsum(w: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    w.iter().enumerate().map(|(i, w)| w * f(i)).sum()
}

/// Below this τ/w the quadrature v-branch constants are flagged as degraded.
const CANCELLATION_FLOOR: f64 = 0.02;

/// Evaluates the defining overlap integrals on the pulse grid (trapezoid rule) and
/// takes η, ξ, ζ from the sampled pulse-pair family. Requires τ > 0.
pub fn pulse_mode_constants_quadrature(shape: &PulseShape, tau: f64) -> Result<PulseConstants> {
    shape.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!(
            "quadrature constants need a positive separation, got {tau}"
        )));
    }
    let grid = shape.grid(tau)?;
    let w = Rule::Trapezoid.weights(&grid)?;
    let pts: Vec<f64> = grid.points().collect();
    let a: Vec<[f64; 3]> = pts.iter().map(|t| shape.eval(t - 0.5 * tau)).collect();
    let b: Vec<[f64; 3]> = pts.iter().map(|t| shape.eval(t + 0.5 * tau)).collect();
    let single: Vec<[f64; 3]> = pts.iter().map(|&t| shape.eval(t)).collect();

    let delta = wsum(&w, |i| a[i][0] * b[i][0]);
    let one_minus_delta = 0.5 * wsum(&w, |i| (a[i][0] - b[i][0]).powi(2));
    let d_delta = wsum(&w, |i| -0.5 * a[i][1] * b[i][0] + 0.5 * a[i][0] * b[i][1]);
    let dd_delta = wsum(&w, |i| {
        0.25 * a[i][2] * b[i][0] - 0.5 * a[i][1] * b[i][1] + 0.25 * a[i][0] * b[i][2]
    });
    let beta = wsum(&w, |i| a[i][1] * b[i][1]);
    let d_beta = wsum(&w, |i| -0.5 * a[i][2] * b[i][1] + 0.5 * a[i][1] * b[i][2]);
    let epsilon = wsum(&w, |i| a[i][2] * b[i][2]);
    let dk2 = wsum(&w, |i| single[i][1].powi(2));
    let sigma4 = wsum(&w, |i| single[i][2].powi(2));

    let fam = PulsePairFamily::new(*shape, true)?;
    let ov = fam.overlaps(tau)?;
    let c = &ov.derivative;
    let resid = |k: usize| {
        ov.derivative_gram[(k, k)].re - (0..4).map(|l| c[(k, l)].norm_sqr()).sum::<f64>()
    };
    Ok(PulseConstants {
        tau,
        delta,
        one_minus_delta,
        d_delta,
        dd_delta,
        beta,
        d_beta,
        dk2,
        sigma4,
        epsilon,
        eta_u: c[(0, 2)].re,
        eta_v: c[(1, 3)].re,
        xi_u: c[(2, 0)].re,
        xi_v: c[(3, 1)].re,
        zeta_u: resid(2).max(0.0).sqrt(),
        zeta_v: resid(3).max(0.0).sqrt(),
        flags: ConstantFlags {
            underflow: delta == 0.0,
            quadrature: true,
            cancellation: tau < CANCELLATION_FLOOR * shape.width(),
            ..ConstantFlags::default()
        },
    })
}

/// Samples of the pulse-pair modes used by the quadrature path.
pub fn pulse_pair_samples(shape: &PulseShape, tau: f64) -> Result<Samples> {
    PulsePairFamily::new(*shape, true)?.samples(tau)
}

impl PulseConstants {
    /// η_u² from the overlap data alone; cross-check for the mode-based value.
    pub fn eta_u_squared_from_overlaps(&self) -> f64 {
        let p = 1.0 + self.delta;
        (self.dk2 - self.beta) / (4.0 * p) - self.d_delta.powi(2) / (4.0 * p * p)
    }

    /// η_v² from the overlap data alone.
    pub fn eta_v_squared_from_overlaps(&self) -> f64 {
        let m = self.one_minus_delta;
        (self.dk2 + self.beta) / (4.0 * m) - self.d_delta.powi(2) / (4.0 * m * m)
    }

    /// (∂δ)²/(1 − δ²), continued by Δk² at τ = 0.
    fn overlap_rate(&self) -> f64 {
        if self.one_minus_delta > 0.0 {
            self.d_delta.powi(2) / ((1.0 + self.delta) * self.one_minus_delta)
        } else {
            self.dk2
        }
    }
}

fn check_inputs(n0: f64, r: f64) -> Result<()> {
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(Error::Domain(format!("N0 must be non-negative, got {n0}")));
    }
    if !r.is_finite() {
        return Err(Error::Domain(format!("squeezing must be finite, got {r}")));
    }
    Ok(())
}

/// Thermal pulses with N₀ photons each and squeezed vacua (parameter r) in both
/// first-derivative modes u_1, v_1.
pub fn pulse_qfi_thermal_squeezed(n0: f64, r: f64, c: &PulseConstants) -> Result<f64> {
    check_inputs(n0, r)?;
    let (s2, c2) = (r.sinh().powi(2), r.cosh().powi(2));
    let d = c.delta;
    let (pu, pv) = (1.0 + d, c.one_minus_delta);
    let population = 2.0 * n0 * (1.0 + n0 * (1.0 + d * d)) * c.overlap_rate()
        / ((1.0 + n0).powi(2) - (n0 * d).powi(2));
    let leakage = 4.0 * (c.zeta_u.powi(2) + c.zeta_v.powi(2)) * s2;
    let motion = 4.0 * n0 * (c.eta_u.powi(2) * pu + c.eta_v.powi(2) * pv) * c2;
    let mixed_u = 4.0 * (n0 * pu * c.eta_u - c.xi_u).powi(2) * s2 / (1.0 + n0 * pu);
    let mixed_v = 4.0 * (n0 * pv * c.eta_v - c.xi_v).powi(2) * s2 / (1.0 + n0 * pv);
    Ok(population + leakage + motion + mixed_u + mixed_v)
}

/// Mean-field part for coherent pulses of N₀ photons with relative phase φ and
/// q-squeezed vacua in u_1, v_1.
pub fn pulse_coherent_displacement_term(
    n0: f64,
    r: f64,
    phi: f64,
    c: &PulseConstants,
) -> Result<f64> {
    check_inputs(n0, r)?;
    if !phi.is_finite() {
        return Err(Error::Domain(format!("phase must be finite, got {phi}")));
    }
    let (pu, pv) = (1.0 + c.delta, c.one_minus_delta);
    let (cp, sp) = (phi.cos(), phi.sin());
    let (eu2, ev2) = (c.eta_u.powi(2), c.eta_v.powi(2));
    let grow = (2.0 * r).exp();
    Ok(2.0 * n0 * (1.0 - c.delta * cp) * c.overlap_rate()
        + 2.0 * n0 * grow * eu2 * pu * (1.0 + cp).powi(2)
        + 2.0 * n0 * grow * ev2 * pv * (1.0 - cp).powi(2)
        + 2.0 * n0 * sp * sp * (eu2 * pu + ev2 * pv) / grow)
}

pub fn pulse_qfi_coherent_squeezed(n0: f64, r: f64, phi: f64, c: &PulseConstants) -> Result<f64> {
    Ok(pulse_coherent_displacement_term(n0, r, phi, c)? + pulse_qfi_thermal_squeezed(0.0, r, c)?)
}

/// Mean fields of u_0 and v_0 for coherent pulses √N₀ and √N₀e^{iφ}.
pub fn pulse_coherent_means(n0: f64, phi: f64, c: &PulseConstants) -> ([f64; 2], [f64; 2]) {
    let au = (2.0 * n0 * (1.0 + c.delta)).sqrt();
    let av = (2.0 * n0 * c.one_minus_delta).sqrt();
    (
        [au * (1.0 + phi.cos()), au * phi.sin()],
        [av * (1.0 - phi.cos()), -av * phi.sin()],
    )
}

/// One nonzero squared coefficient on the reduced modes u_0=0, v_0=1, u_1=2, v_1=3,
/// u_2=4, v_2=5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientEntry {
    pub group: char,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub squared: f64,
}

/// Squared nonzero SLD coefficients of the thermal-squeezed pulse problem, each
/// listed once per ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SldCoefficients {
    pub a00: f64,
    pub a11: f64,
    pub b1_00: f64,
    pub b2_00: f64,
    pub b1_11: f64,
    pub b2_11: f64,
    pub d1_00: f64,
    pub d1_11: f64,
}

pub fn sld_coefficients(n0: f64, r: f64, c: &PulseConstants) -> Result<SldCoefficients> {
    check_inputs(n0, r)?;
    let (s2, c2) = (r.sinh().powi(2), r.cosh().powi(2));
    let (pu, pv) = (1.0 + c.delta, c.one_minus_delta);
    let a = 8.0 * n0 * n0 * c.d_delta.powi(2);
    Ok(SldCoefficients {
        a00: a,
        a11: a,
        b1_00: 8.0 * (n0 * pu * c.eta_u - c.xi_u).powi(2) * s2,
        b2_00: 8.0 * (n0 * pu * c.eta_u).powi(2) * c2,
        b1_11: 8.0 * (n0 * pv * c.eta_v - c.xi_v).powi(2) * s2,
        b2_11: 8.0 * (n0 * pv * c.eta_v).powi(2) * c2,
        d1_00: 8.0 * c.zeta_u.powi(2) * s2,
        d1_11: 8.0 * c.zeta_v.powi(2) * s2,
    })
}

impl SldCoefficients {
    pub fn entries(&self) -> Vec<CoefficientEntry> {
        let mut out = vec![
            CoefficientEntry {
                group: 'a',
                j: 0,
                k: 0,
                l: 2,
                squared: self.a00,
            },
            CoefficientEntry {
                group: 'a',
                j: 1,
                k: 1,
                l: 2,
                squared: self.a11,
            },
        ];
        let pairs = [
            ('b', 0, 2, 1, self.b1_00),
            ('b', 0, 2, 2, self.b2_00),
            ('b', 1, 3, 1, self.b1_11),
            ('b', 1, 3, 2, self.b2_11),
            ('d', 2, 4, 1, self.d1_00),
            ('d', 3, 5, 1, self.d1_11),
        ];
        for (group, j, k, l, squared) in pairs {
            out.push(CoefficientEntry {
                group,
                j,
                k,
                l,
                squared,
            });
            out.push(CoefficientEntry {
                group,
                j: k,
                k: j,
                l,
                squared,
            });
        }
        out
    }

    /// ½ Σ coefficient²/denominator with the matching symplectic eigenvalues.
    pub fn qfi(&self, n0: f64, c: &PulseConstants) -> f64 {
        let nu = [
            2.0 * n0 * (1.0 + c.delta) + 1.0,
            2.0 * n0 * c.one_minus_delta + 1.0,
        ];
        let nu_of = |i: usize| if i < 2 { nu[i] } else { 1.0 };
        self.entries()
            .iter()
            .filter(|e| e.squared != 0.0)
            .map(|e| {
                let sign = if e.l % 2 == 0 { 1.0 } else { -1.0 };
                let den = nu_of(e.j) * nu_of(e.k) - sign;
                0.5 * e.squared / den
            })
            .sum()
    }
}

/// Which large-separation limit to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitForm {
    /// 2Δk²(2 sinh²r + N₀ cosh 2r) for thermal pulses, N₀e^{2r} for coherent ones.
    Reduced,
    /// Large-τ value of the closed forms: leakage 2(σ₄/Δk² − Δk²) sinh²r instead of
    /// 2Δk² sinh²r. For a Gaussian this is 2Δk²(3 sinh²r + …).
    Exact,
}

/// τ → 0: 2N₀Δk², independent of r.
pub fn thermal_small_separation_limit(n0: f64, dk2: f64) -> f64 {
    2.0 * n0 * dk2
}

/// τ → 0: 2N₀Δk²(1 − cos φ).
pub fn coherent_small_separation_limit(n0: f64, phi: f64, dk2: f64) -> f64 {
    2.0 * n0 * dk2 * (1.0 - phi.cos())
}

fn leakage_limit(form: LimitForm, r: f64, dk2: f64, sigma4: f64) -> f64 {
    let s2 = r.sinh().powi(2);
    match form {
        LimitForm::Reduced => 2.0 * dk2 * s2,
        LimitForm::Exact => 2.0 * (sigma4 / dk2 - dk2) * s2,
    }
}

pub fn thermal_large_separation_limit(
    form: LimitForm,
    n0: f64,
    r: f64,
    dk2: f64,
    sigma4: f64,
) -> f64 {
    let s2 = r.sinh().powi(2);
    leakage_limit(form, r, dk2, sigma4) + 2.0 * dk2 * (s2 + n0 * (2.0 * r).cosh())
}

/// Large τ for φ = 0 or π; other phases add N₀Δk²(e^{−2r} − e^{2r}) sin²φ.
pub fn coherent_large_separation_limit(
    form: LimitForm,
    n0: f64,
    r: f64,
    phi: f64,
    dk2: f64,
    sigma4: f64,
) -> f64 {
    let s2 = r.sinh().powi(2);
    let sp2 = phi.sin().powi(2);
    leakage_limit(form, r, dk2, sigma4)
        + 2.0 * dk2 * s2
        + n0 * dk2 * ((2.0 * r).exp() * (2.0 - sp2) + (-2.0 * r).exp() * sp2)
}

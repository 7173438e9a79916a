use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quadrature::{overlaps_from_samples, Grid, Rule, Samples};
use super::{FamilyOverlaps, ModeFamily};
use crate::error::{Error, Result};

/// Real, even pulse envelope of width `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PulseShape {
    /// exp(−t²/2w²)/(πw²)^{1/4}
    Gaussian { width: f64 },
    /// sech(t/w)/√(2w)
    Sech { width: f64 },
}

impl PulseShape {
    pub fn width(&self) -> f64 {
        match *self {
            PulseShape::Gaussian { width } | PulseShape::Sech { width } => width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.width();
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!(
                "pulse width must be positive, got {w}"
            )));
        }
        Ok(())
    }

    /// (u, u′, u″) at t.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        match *self {
            PulseShape::Gaussian { width: w } => {
                let u = (std::f64::consts::PI * w * w).powf(-0.25) * (-t * t / (2.0 * w * w)).exp();
                let w2 = w * w;
                [u, -t / w2 * u, (t * t / (w2 * w2) - 1.0 / w2) * u]
            }
            PulseShape::Sech { width: w } => {
                let a = 1.0 / (2.0 * w).sqrt();
                let x = t / w;
                let s = 1.0 / x.cosh();
                let th = x.tanh();
                [
                    a * s,
                    -a / w * s * th,
                    a / (w * w) * s * (1.0 - 2.0 * s * s),
                ]
            }
        }
    }

    /// Grid used for pulse pairs at separation τ: step w/25, half-width τ/2 + 14w.
    pub fn grid(&self, tau: f64) -> Result<Grid> {
        let w = self.width();
        Grid::symmetric(0.5 * tau.abs() + 14.0 * w, w / 25.0)
    }
}

/// The symmetric/antisymmetric pair u_0, v_0 of two copies of `shape` separated by τ,
/// optionally followed by their normalised τ-derivatives u_1, v_1.
///
/// Mode order is (u_0, v_0) or (u_0, v_0, u_1, v_1). Overlaps use the trapezoid rule
/// on [`PulseShape::grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePairFamily {
    pub shape: PulseShape,
    pub derivative_modes: bool,
}

struct Branch {
    f: [DVector<f64>; 3],
}

fn dot(w: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    w.iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

impl PulsePairFamily {
    pub fn new(shape: PulseShape, derivative_modes: bool) -> Result<Self> {
        shape.validate()?;
        Ok(PulsePairFamily {
            shape,
            derivative_modes,
        })
    }

    /// g = u(t − τ/2) ± u(t + τ/2) normalised, with its first two τ-derivatives.
    fn branch(&self, grid: &Grid, w: &[f64], tau: f64, sign: f64) -> Result<Branch> {
        let n = grid.len;
        let mut g = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
        for (i, t) in grid.points().enumerate() {
            let a = self.shape.eval(t - 0.5 * tau);
            let b = self.shape.eval(t + 0.5 * tau);
            g[0][i] = a[0] + sign * b[0];
            g[1][i] = -0.5 * a[1] + sign * 0.5 * b[1];
            g[2][i] = 0.25 * a[2] + sign * 0.25 * b[2];
        }
        let s = dot(w, &g[0], &g[0]);
        if !(s > 0.0) {
            return Err(Error::Domain(format!(
                "pulse pair mode vanishes at tau = {tau}"
            )));
        }
        let s1 = 2.0 * dot(w, &g[0], &g[1]);
        let s2 = 2.0 * (dot(w, &g[1], &g[1]) + dot(w, &g[0], &g[2]));
        let r = s.sqrt();
        let f0 = &g[0] / r;
        let f1 = &g[1] / r - &g[0] * (0.5 * s1 / (s * r));
        let f2 = &g[2] / r - &g[1] * (s1 / (s * r))
            + &g[0] * (0.75 * s1 * s1 / (s * s * r) - 0.5 * s2 / (s * r));
        Ok(Branch { f: [f0, f1, f2] })
    }

    pub fn samples(&self, tau: f64) -> Result<Samples> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Domain(format!(
                "pulse separation must be positive, got {tau}"
            )));
        }
        let grid = self.shape.grid(tau)?;
        let w = Rule::Trapezoid.weights(&grid)?;
        let sym = self.branch(&grid, &w, tau, 1.0)?;
        let anti = self.branch(&grid, &w, tau, -1.0)?;
        let mut values = vec![sym.f[0].clone(), anti.f[0].clone()];
        let mut derivatives = vec![sym.f[1].clone(), anti.f[1].clone()];
        if self.derivative_modes {
            for b in [&sym, &anti] {
                let n0 = dot(&w, &b.f[1], &b.f[1]).sqrt();
                if !(n0 > 0.0) {
                    return Err(Error::Domain(format!(
                        "derivative mode vanishes at tau = {tau}"
                    )));
                }
                let n1 = dot(&w, &b.f[1], &b.f[2]) / n0;
                values.push(&b.f[1] / n0);
                derivatives.push(&b.f[2] / n0 - &b.f[1] * (n1 / (n0 * n0)));
            }
        }
        let cplx = |v: Vec<DVector<f64>>| -> Vec<DVector<Complex64>> {
            v.into_iter()
                .map(|x| x.map(|r| Complex64::new(r, 0.0)))
                .collect()
        };
        Ok(Samples {
            grid,
            values: cplx(values),
            derivatives: Some(cplx(derivatives)),
        })
    }
}

impl ModeFamily for PulsePairFamily {
    fn mode_count(&self) -> usize {
        if self.derivative_modes {
            4
        } else {
            2
        }
    }

    fn overlaps(&self, tau: f64) -> Result<FamilyOverlaps> {
        let s = self.samples(tau)?;
        let w = Rule::Trapezoid.weights(&s.grid)?;
        let d = s
            .derivatives
            .as_ref()
            .expect("pulse samples carry derivatives");
        Ok(overlaps_from_samples(&s.values, d, &w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shapes_are_normalised_and_differentiated() {
        for shape in [
            PulseShape::Gaussian { width: 0.7 },
            PulseShape::Sech { width: 1.3 },
        ] {
            let g = shape.grid(0.0).unwrap();
            let w = Rule::Trapezoid.weights(&g).unwrap();
            let norm: f64 = g
                .points()
                .zip(&w)
                .map(|(t, w)| w * shape.eval(t)[0].powi(2))
                .sum();
            assert_relative_eq!(norm, 1.0, epsilon = 1e-10);
            let h = 1e-5;
            for t in [-0.9, 0.1, 1.7] {
                let [_, d1, d2] = shape.eval(t);
                let fd1 = (shape.eval(t + h)[0] - shape.eval(t - h)[0]) / (2.0 * h);
                let fd2 = (shape.eval(t + h)[1] - shape.eval(t - h)[1]) / (2.0 * h);
                assert_relative_eq!(d1, fd1, epsilon = 1e-8);
                assert_relative_eq!(d2, fd2, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pulse_pair_is_orthonormal_with_parity_zeros() {
        let fam = PulsePairFamily::new(PulseShape::Gaussian { width: 1.0 }, true).unwrap();
        let o = fam.overlaps(1.0).unwrap();
        assert!(o.orthonormality_defect() < 1e-12);
        // (u_0|∂v_0), (v_0|∂u_0), (v_1|∂u_1), (u_1|∂v_1)
        for (k, l) in [(1, 0), (0, 1), (2, 3), (3, 2)] {
            assert!(o.derivative[(k, l)].norm() < 1e-10);
        }
        // Gaussian: ξ_u = −η_u
        assert_relative_eq!(
            o.derivative[(2, 0)].re,
            -o.derivative[(0, 2)].re,
            epsilon = 1e-12
        );
    }

    #[test]
    fn needs_positive_separation() {
        let fam = PulsePairFamily::new(PulseShape::Sech { width: 1.0 }, false).unwrap();
        assert!(fam.samples(0.0).is_err());
        assert!(PulsePairFamily::new(PulseShape::Gaussian { width: -1.0 }, false).is_err());
    }
}

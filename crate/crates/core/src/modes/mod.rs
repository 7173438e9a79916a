//! Parameter-dependent mode families and the QFI of parameters carried by the modes.
//!
//! A family supplies the overlaps of its populated modes u_k[θ] with each other and
//! with their θ-derivatives. Everything downstream works in the reduced basis
//! {u_k} ∪ {u′_i} (populated modes plus orthonormalised derivative residuals); the
//! rest of the mode space never needs to be built.

mod coupling;
mod encoded;
mod pulse;
mod quadrature;

pub use coupling::{gram_schmidt_derivatives, gram_schmidt_derivatives_with, DerivativeCoupling};
pub use encoded::{
    f_sigma_mode_encoded, f_sigma_mode_encoded_with, f_xbar_mode_encoded, mode_encoded_qfi,
    mode_encoded_qfi_using, mode_encoded_qfi_with, reduced_form, sensing_mode,
    CovarianceContribution, DisplacementContribution, ModeEncodedProblem, ReducedForm, SensingMode,
};
pub use pulse::{PulsePairFamily, PulseShape};
pub use quadrature::{overlaps_from_samples, Grid, QuadratureFamily, Rule, SampledFamily, Samples};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Overlap tables at one θ, all stored as [k, l] = (x_l|y_k).
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOverlaps {
    /// (u_l|u_k)
    pub overlap: DMatrix<Complex64>,
    /// (u_l|∂u_k)
    pub derivative: DMatrix<Complex64>,
    /// (∂u_l|∂u_k)
    pub derivative_gram: DMatrix<Complex64>,
}

impl FamilyOverlaps {
    pub fn modes(&self) -> usize {
        self.overlap.nrows()
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        for (m, what) in [
            (&self.overlap, "overlap"),
            (&self.derivative, "derivative overlap"),
            (&self.derivative_gram, "derivative Gram"),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape(format!(
                    "{what} table is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Largest |(u_l|u_k) − δ_kl|.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.modes();
        let mut worst = 0.0_f64;
        for k in 0..n {
            for l in 0..n {
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((self.overlap[(k, l)] - target).norm());
            }
        }
        worst
    }
}

/// A set of orthonormal populated modes u_k[θ].
///
/// Implementations must be pure: the same θ gives the same tables, and calls may
/// come from several threads at once.
pub trait ModeFamily: Send + Sync {
    fn mode_count(&self) -> usize;
    fn overlaps(&self, theta: f64) -> Result<FamilyOverlaps>;
}

type Entry<'a> = dyn Fn(usize, usize, f64) -> Complex64 + Send + Sync + 'a;

/// Family given by closures (k, l, θ) ↦ overlap entries.
pub struct AnalyticFamily<'a> {
    n: usize,
    overlap: Option<Box<Entry<'a>>>,
    derivative: Box<Entry<'a>>,
    derivative_gram: Box<Entry<'a>>,
}

impl<'a> AnalyticFamily<'a> {
    /// `derivative(k, l, θ)` = (u_l|∂u_k), `derivative_gram(k, l, θ)` = (∂u_l|∂u_k).
    /// The overlap defaults to the identity.
    pub fn new(
        n: usize,
        derivative: impl Fn(usize, usize, f64) -> Complex64 + Send + Sync + 'a,
        derivative_gram: impl Fn(usize, usize, f64) -> Complex64 + Send + Sync + 'a,
    ) -> Self {
        AnalyticFamily {
            n,
            overlap: None,
            derivative: Box::new(derivative),
            derivative_gram: Box::new(derivative_gram),
        }
    }

    pub fn with_overlap(
        mut self,
        overlap: impl Fn(usize, usize, f64) -> Complex64 + Send + Sync + 'a,
    ) -> Self {
        self.overlap = Some(Box::new(overlap));
        self
    }
}

fn table(n: usize, f: impl Fn(usize, usize) -> Complex64) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, f)
}

impl ModeFamily for AnalyticFamily<'_> {
    fn mode_count(&self) -> usize {
        self.n
    }

    fn overlaps(&self, theta: f64) -> Result<FamilyOverlaps> {
        let overlap = match &self.overlap {
            Some(f) => table(self.n, |k, l| f(k, l, theta)),
            None => DMatrix::identity(self.n, self.n),
        };
        Ok(FamilyOverlaps {
            overlap,
            derivative: table(self.n, |k, l| (self.derivative)(k, l, theta)),
            derivative_gram: table(self.n, |k, l| (self.derivative_gram)(k, l, theta)),
        })
    }
}

/// Modes that do not depend on θ.
#[derive(Debug, Clone, Copy)]
pub struct StaticFamily {
    pub modes: usize,
}

impl ModeFamily for StaticFamily {
    fn mode_count(&self) -> usize {
        self.modes
    }

    fn overlaps(&self, _theta: f64) -> Result<FamilyOverlaps> {
        let n = self.modes;
        Ok(FamilyOverlaps {
            overlap: DMatrix::identity(n, n),
            derivative: DMatrix::zeros(n, n),
            derivative_gram: DMatrix::zeros(n, n),
        })
    }
}

/// Hermite–Gauss modes φ_o(x − d) of waist `w`, differentiated in the displacement d.
///
/// φ_0 = exp(−x²/2w²)/(πw²)^{1/4}; ∂_d φ_o = (√(o+1) φ_{o+1} − √o φ_{o−1})/(w√2).
#[derive(Debug, Clone)]
pub struct HermiteGaussFamily {
    orders: Vec<usize>,
    waist: f64,
}

impl HermiteGaussFamily {
    pub fn new(orders: Vec<usize>, waist: f64) -> Result<Self> {
        if !(waist.is_finite() && waist > 0.0) {
            return Err(Error::Domain(format!(
                "waist must be positive, got {waist}"
            )));
        }
        if orders.is_empty() {
            return Err(Error::InvalidDimension(
                "no Hermite–Gauss orders given".into(),
            ));
        }
        let mut sorted = orders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != orders.len() {
            return Err(Error::Domain(
                "Hermite–Gauss orders must be distinct".into(),
            ));
        }
        Ok(HermiteGaussFamily { orders, waist })
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    /// ∂_d φ_o as (order, coefficient) pairs.
    fn derivative_expansion(&self, o: usize) -> Vec<(usize, f64)> {
        let s = 1.0 / (self.waist * std::f64::consts::SQRT_2);
        let mut v = vec![(o + 1, ((o + 1) as f64).sqrt() * s)];
        if o > 0 {
            v.push((o - 1, -(o as f64).sqrt() * s));
        }
        v
    }
}

impl ModeFamily for HermiteGaussFamily {
    fn mode_count(&self) -> usize {
        self.orders.len()
    }

    fn overlaps(&self, _theta: f64) -> Result<FamilyOverlaps> {
        let n = self.orders.len();
        let exp: Vec<_> = self
            .orders
            .iter()
            .map(|&o| self.derivative_expansion(o))
            .collect();
        let derivative = table(n, |k, l| {
            let target = self.orders[l];
            let c: f64 = exp[k]
                .iter()
                .filter(|(o, _)| *o == target)
                .map(|(_, c)| c)
                .sum();
            Complex64::new(c, 0.0)
        });
        let derivative_gram = table(n, |k, l| {
            let mut s = 0.0;
            for (ok, ck) in &exp[k] {
                for (ol, cl) in &exp[l] {
                    if ok == ol {
                        s += ck * cl;
                    }
                }
            }
            Complex64::new(s, 0.0)
        });
        Ok(FamilyOverlaps {
            overlap: DMatrix::identity(n, n),
            derivative,
            derivative_gram,
        })
    }
}

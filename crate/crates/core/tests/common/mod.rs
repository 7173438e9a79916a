//! Random symplectic matrices and random Gaussian states for the test suites.
#![allow(dead_code)]

use modeqfi::states::{basis_change_from_unitary, make_state, GaussianState};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-ish unitary: exp(iH) of a random Hermitian H.
pub fn random_unitary(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<Complex64> {
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(rng.gen_range(-scale..scale), 0.0);
        for j in 0..i {
            let z = Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    (h * Complex64::new(0.0, 1.0)).exp()
}

/// Orthogonal symplectic (passive) matrix of a random mode rotation.
pub fn random_passive(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    basis_change_from_unitary(&random_unitary(rng, n, 2.0))
        .unwrap()
        .o
}

/// Single-mode squeezers diag(e^{−r}, e^{r}) on every mode.
pub fn squeezers(r: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        2 * r.len(),
        r.iter().flat_map(|&x| [(-x).exp(), x.exp()]),
    ))
}

/// K₁ Z K₂ with |r| ≤ `max_r`.
pub fn random_symplectic(rng: &mut impl Rng, n: usize, max_r: f64) -> DMatrix<f64> {
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-max_r..=max_r)).collect();
    random_passive(rng, n) * squeezers(&r) * random_passive(rng, n)
}

pub fn nu_matrix(nu: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        2 * nu.len(),
        nu.iter().flat_map(|&v| [v, v]),
    ))
}

pub struct RandomState {
    pub state: GaussianState,
    /// Symplectic eigenvalues used to build the state, non-increasing.
    pub nu: Vec<f64>,
    pub s: DMatrix<f64>,
}

/// σ = S ν Sᵀ with ν in `nu_range` and a random mean.
pub fn random_state(rng: &mut impl Rng, n: usize, nu_range: (f64, f64), max_r: f64) -> RandomState {
    let mut nu: Vec<f64> = (0..n)
        .map(|_| {
            if nu_range.0 == nu_range.1 {
                nu_range.0
            } else {
                rng.gen_range(nu_range.0..nu_range.1)
            }
        })
        .collect();
    nu.sort_by(|a, b| b.total_cmp(a));
    let s = random_symplectic(rng, n, max_r);
    let mut sigma = &s * nu_matrix(&nu) * s.transpose();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let xbar = DVector::from_fn(2 * n, |_, _| rng.gen_range(-2.0..2.0));
    RandomState {
        state: make_state(xbar, sigma).unwrap(),
        nu,
        s,
    }
}

pub fn random_symmetric(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

pub fn random_vector(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn frobenius_relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

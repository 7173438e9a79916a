use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by the decomposition, QFI and mode code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Slack on ν ≥ 1.
    pub phys: f64,
    /// Relative asymmetry accepted for covariance matrices.
    pub symm: f64,
    /// Residual of S Ω Sᵀ = Ω.
    pub symp: f64,
    /// Relative residual of S ν Sᵀ = σ.
    pub recon: f64,
    /// Denominators below this are treated as singular.
    pub sing: f64,
    /// Numerators below this are treated as zero.
    pub zero: f64,
    /// Agreement required between the two F_σ evaluations.
    pub xcheck: f64,
    /// Orthonormality of mode families.
    pub ortho: f64,
    /// Residual norm below which a derivative adds no new mode.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            phys: 1e-9,
            symm: 1e-10,
            symp: 1e-8,
            recon: 1e-8,
            sing: 1e-10,
            zero: 1e-8,
            xcheck: 1e-8,
            ortho: 1e-8,
            rank: 1e-7,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unphysical state: minimum symplectic eigenvalue {min_nu} is below 1")]
    Unphysical { min_nu: f64 },

    #[error("decomposition failed: {what} (residual {residual:e})")]
    Decomposition { what: String, residual: f64 },

    #[error("singular SLD term (j={j}, k={k}, l={l}): coefficient {coefficient:e} over denominator {denominator:e}")]
    SingularSld {
        j: usize,
        k: usize,
        l: usize,
        coefficient: f64,
        denominator: f64,
    },

    #[error("internal inconsistency: F_sigma from trace {trace} differs from term sum {sum}")]
    Inconsistent { trace: f64, sum: f64 },

    #[error("numerical rank: {0}")]
    NumericalRank(String),

    #[error("sensing mode undefined: mean field and its derivative both vanish")]
    UndefinedSensingMode,

    #[error("evaluation at theta = {theta}: {source}")]
    Evaluation {
        theta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Decomposition { .. }
            | Error::SingularSld { .. }
            | Error::Inconsistent { .. }
            | Error::NumericalRank(_)
            | Error::UndefinedSensingMode => true,
            Error::Evaluation { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at(self, theta: f64) -> Error {
        Error::Evaluation {
            theta,
            source: Box::new(self),
        }
    }
}

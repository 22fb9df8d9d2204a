use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite log-likelihood term at observation {index} (value {value})")]
    NonFiniteLogLik { index: usize, value: f64 },

    #[error("Fisher information is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("every quadrature node underflows")]
    AllUnderflow,

    #[error("Monte Carlo estimate diverged: {0}")]
    EstimateDiverged(String),

    #[error("prior has no mass on the requested region")]
    ZeroMass,

    #[error("no Beta distribution has mean {mean} and variance {variance}")]
    InfeasibleMoment { mean: f64, variance: f64 },

    #[error("prior must be normalized for this operation")]
    NormalizationError,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("integrand is not integrable: {0}")]
    Integrability(String),

    #[error(
        "exponent beta = -1 (chi-square) lies outside both limit theorems; \
         its optimum may be the inverse of the Jeffreys prior"
    )]
    ChiSquareBoundary,

    #[error("every point of the search range is infeasible")]
    NoFeasiblePoint,

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Stable variant name, printed by the CLI on numeric failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::NonFiniteLogLik { .. } => "NonFiniteLogLik",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::AllUnderflow => "AllUnderflow",
            Error::EstimateDiverged(_) => "EstimateDiverged",
            Error::ZeroMass => "ZeroMass",
            Error::InfeasibleMoment { .. } => "InfeasibleMoment",
            Error::NormalizationError => "NormalizationError",
            Error::NonFinite(_) => "NonFinite",
            Error::Integrability(_) => "IntegrabilityError",
            Error::ChiSquareBoundary => "ChiSquareBoundary",
            Error::NoFeasiblePoint => "NoFeasiblePoint",
            Error::Unsupported(_) => "Unsupported",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

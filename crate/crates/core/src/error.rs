use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rho must lie in (1, 2], got {0}")]
    RhoOutOfRange(f64),

    #[error("eps must lie in (0, 0.25], got {0}")]
    EpsOutOfRange(f64),

    #[error("parameter `{0}` must be strictly positive")]
    OverrideNonPositive(&'static str),

    #[error("invalid point set: {0}")]
    InvalidPointSet(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("every point fell below the mass floor")]
    AllMassPruned,

    #[error("coupling marginals violated by {0:e}")]
    CouplingMarginalViolation(f64),

    #[error("dense coupling with {0} entries exceeds the 10^6 limit")]
    DenseTooLarge(usize),

    #[error("instance too large for oracle: {0} pairs (limit 10^4)")]
    OracleTooLarge(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("query distance {dist:e} outside promised range [{lo:e}, {hi:e}]")]
    AspectRatioViolated { dist: f64, lo: f64, hi: f64 },

    #[error("weight gap {gap:e} is below the grid anchor {anchor:e}")]
    WeightPromiseViolated { gap: f64, anchor: f64 },

    #[error("oracle did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

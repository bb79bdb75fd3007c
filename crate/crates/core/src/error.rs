use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})"
    )]
    NotPsd { min_eigenvalue: f64 },

    #[error("orthant violation: {0}")]
    OrthantViolation(String),

    #[error("invalid jump measure: {0}")]
    InvalidJumpMeasure(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("negative time coordinate {value} at index {index}")]
    NegativeTime { index: usize, value: f64 },

    #[error("Laplace exponent argument has negative real part {value} at index {index}")]
    NegativeRealPart { index: usize, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty sample")]
    EmptySample,

    #[error("too few samples: need at least {min}, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("degenerate theta grid: {0}")]
    DegenerateGrid(String),

    #[error("path too short: horizon {horizon} < required {required}")]
    PathTooShort { horizon: f64, required: f64 },

    #[error("time {0} is not recorded on a path with drift")]
    NotRecorded(f64),

    #[error("scenario configuration inconsistent: {0}")]
    ScenarioMismatch(String),
}

impl Error {
    pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                got,
            })
        }
    }
}

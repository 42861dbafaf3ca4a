use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("equalization requested on a failed link")]
    FailedFrame,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unstable step size {step}: spectral radius {radius} >= 1")]
    Unstable { step: f64, radius: f64 },

    #[error("all {trials} trials diverged for every algorithm")]
    AllDiverged { trials: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

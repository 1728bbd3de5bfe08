use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state has zero norm after {0}")]
    ZeroNorm(&'static str),

    #[error("expected a pure state")]
    NotPure,

    #[error("series did not converge within {terms} terms (tail {tail:e})")]
    ConvergenceNotReached { terms: usize, tail: f64 },

    #[error("step control failed at t = {t}: error {error:e} above tolerance at minimum step {step:e}")]
    StepControl { t: f64, step: f64, error: f64 },

    #[error("truncation leakage {leakage:e} exceeds {limit:e} at t = {t}")]
    Truncation { t: f64, leakage: f64, limit: f64 },

    #[error("record does not match the simulation: {0}")]
    RecordMismatch(String),

    #[error("invalid click record: {0}")]
    InvalidRecord(String),

    #[error("correlation undefined: emission probability vanishes at t = {0}")]
    UndefinedCorrelation(f64),

    #[error("degenerate posterior at t = {0}: every grid node has zero likelihood")]
    DegeneratePosterior(f64),

    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),

    #[error("numerical accuracy lost: {0}")]
    Accuracy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

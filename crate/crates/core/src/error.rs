use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter outside the family's space: {0}")]
    ParameterDomain(String),

    #[error("cannot sample or estimate from an empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("information matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularInformation { min_eigenvalue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("logistic fit did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("complete separation in logistic fit after {iterations} iterations")]
    Separation { iterations: usize },

    #[error("estimator `{estimator}` is not defined for family `{family}`")]
    Incompatible { estimator: String, family: String },

    #[error("schedule index must be >= 1 (step 0 is the real-data step)")]
    ScheduleIndex,

    #[error("sample size overflows at step t = {t}")]
    ScheduleOverflow { t: usize },

    #[error("explicit schedule has {len} coefficients but step {needed} was requested")]
    ScheduleTooShort { len: usize, needed: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("tail/bias metadata violates rho >= kappa/gamma (rho = {rho}, kappa/gamma = {ratio})")]
    InconsistentBias { rho: f64, ratio: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pre-flight validation failed:\n  {}", .0.join("\n  "))]
    PreFlight(Vec<String>),

    #[error("work budget exceeded: {requested:e} draws requested, cap is {cap:e}")]
    Budget { requested: f64, cap: f64 },

    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The adjoint line passes through the origin at the requested time, so
    /// the control direction is undefined there.
    #[error("adjoint vanishes at t = {t}")]
    SingularAdjoint { t: f64 },

    /// All four adjoint coefficients are zero (or non-finite).
    #[error("degenerate control parameters {0:?}")]
    DegenerateParams([f64; 4]),

    #[error("invalid evaluation time {0}")]
    InvalidTime(f64),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

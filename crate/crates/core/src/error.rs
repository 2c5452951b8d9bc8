use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped by [`ErrorKind`] so front ends can map them to
/// stable exit codes without matching on every variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input")]
    EmptyInput,

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("status not binary: {0}")]
    StatusNotBinary(String),

    #[error("missing marker `{0}`")]
    MissingMarker(String),

    #[error("both statuses must be present")]
    SingleStatus,

    #[error("degenerate labels: all labels are equal")]
    DegenerateLabels,

    #[error("separation detected: coefficient norm {norm:.3e} exceeds limit")]
    Separation { norm: f64 },

    #[error("singular information matrix")]
    Singular,

    #[error("logistic fit did not converge after {iterations} iterations (max |gradient| = {gradient:.3e})")]
    NotConverged { iterations: usize, gradient: f64 },

    #[error("ordering violated: tilt slope {0} is not positive")]
    OrderingViolated(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no sign change on the admissible bracket")]
    NoBracket,

    #[error("empty decision space")]
    EmptySpace,

    #[error("size guard exceeded: n = {n} > {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("inconsistent mixture: identity violated by {0:.3e}")]
    InconsistentMixture(f64),

    #[error("estimator failed in {failures} of {replicates} replicates")]
    TooManyFailures { failures: usize, replicates: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::TooLarge { .. } => ErrorKind::Config,
            Error::EmptyInput
            | Error::MissingColumn(_)
            | Error::Row { .. }
            | Error::StatusNotBinary(_)
            | Error::MissingMarker(_)
            | Error::SingleStatus
            | Error::DegenerateLabels
            | Error::EmptySpace
            | Error::InconsistentMixture(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Separation { .. }
            | Error::Singular
            | Error::NotConverged { .. }
            | Error::OrderingViolated(_)
            | Error::Numerical(_)
            | Error::NoBracket
            | Error::TooManyFailures { .. } => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown series id `{0}`")]
    UnknownSeries(String),

    #[error("duplicate observation for series `{series}` at {date}")]
    DuplicateObservation { series: String, date: String },

    #[error("series `{series}` at {date}: {reason}")]
    FrequencyViolation {
        series: String,
        date: String,
        reason: String,
    },

    #[error("release calendar has no entry for series `{0}`")]
    MissingCalendarEntry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sequence too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("non-positive value {value} at position {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("numerically singular matrix: {0}")]
    Singular(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unstable VAR: largest companion eigenvalue modulus {0}")]
    UnstableVar(f64),

    #[error("no retained draws")]
    NoRetainedDraws,

    #[error("chain diverged at sweep {sweep}: {detail}")]
    ChainDivergence { sweep: usize, detail: String },

    #[error("target {series} {quarter} is already fully observed")]
    TargetObserved { series: String, quarter: String },

    #[error("estimation failed for vintage {month}: {source}")]
    VintageFailed {
        month: String,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by the numerical machinery rather than by
    /// malformed inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::Singular(_)
            | Error::NotPositiveDefinite(_)
            | Error::UnstableVar(_)
            | Error::ChainDivergence { .. } => true,
            Error::VintageFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

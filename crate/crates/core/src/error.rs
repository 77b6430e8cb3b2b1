use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate event id `{0}`")]
    DuplicateId(String),

    #[error("event `{id}` has an invalid reference to `{target}`: {reason}")]
    InvalidReference {
        id: String,
        target: String,
        reason: String,
    },

    #[error("stream does not cover the lookback interval: needs data from {needed}, first event at {first:?}")]
    Coverage { needed: i64, first: Option<i64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("curve has {support} support minutes, a spline needs at least 4")]
    DegenerateCurve { support: usize },

    #[error("optimizer did not converge after {iterations} iterations (best log-likelihood {loglik}, parameters {best:?})")]
    NonConvergence {
        iterations: usize,
        loglik: f64,
        best: Vec<f64>,
    },

    #[error("monotone partial likelihood: coefficient for `{covariate}` diverges")]
    MonotoneLikelihood { covariate: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status for this error: 1 usage, 2 data, 3 model convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonConvergence { .. } | Error::MonotoneLikelihood { .. } => 3,
            _ => 2,
        }
    }

    /// Short machine-readable category used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Field { .. } | Error::Record { .. } => "parse",
            Error::DuplicateId(_) | Error::InvalidReference { .. } => "validation",
            Error::Coverage { .. } => "coverage",
            Error::Config(_) => "config",
            Error::Data(_) | Error::DegenerateCurve { .. } => "data",
            Error::NonConvergence { .. } | Error::MonotoneLikelihood { .. } => "convergence",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Toml(_) => "io",
        }
    }
}

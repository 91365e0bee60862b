use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{column}` not found")]
    Schema { column: String },

    #[error("integrity error at {instant}: {reason}")]
    Integrity { instant: String, reason: String },

    #[error("data error at row {row}: {reason}")]
    Data { row: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("divergence at step {step}: non-finite loss (last finite loss {last_finite})")]
    Divergence { step: usize, last_finite: f64 },

    #[error("argument error: {0}")]
    Argument(String),

    #[error("undefined denominator: {0}")]
    UndefinedDenominator(String),

    #[error("checkpoint error in `{field}`: {reason}")]
    Checkpoint { field: String, reason: String },

    #[error("architecture mismatch in `{field}`: expected {expected}, found {found}")]
    ArchitectureMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("dependency error: expected upstream artifact at {}", path.display())]
    Dependency { path: PathBuf },

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-parsable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Integrity { .. } => "integrity",
            Error::Data { .. } => "data",
            Error::Config(_) => "config",
            Error::Size(_) => "size",
            Error::Dimension(_) => "dimension",
            Error::Divergence { .. } => "divergence",
            Error::Argument(_) => "argument",
            Error::UndefinedDenominator(_) => "undefined-denominator",
            Error::Checkpoint { .. } => "checkpoint",
            Error::ArchitectureMismatch { .. } => "architecture-mismatch",
            Error::Dependency { .. } => "dependency",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

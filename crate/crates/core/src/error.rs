use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps to a short machine-readable category (see [`Error::category`]),
/// which the command line driver prints as a prefix.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left:?} vs {right:?}")]
    Dimension {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("batch normalization in train mode needs at least 2 samples, got {0}")]
    InvalidBatch(usize),

    #[error("value {value} outside scaling bounds [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("codeword has zero norm")]
    DegenerateCodeword,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("corrupt file {path}: {message}")]
    Corruption { path: PathBuf, message: String },

    #[error("missing prerequisite stage `{stage}`: {path} not found")]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::InvalidBatch(_) => "invalid-batch",
            Error::OutOfRange { .. } => "out-of-range",
            Error::DegenerateCodeword => "degenerate-codeword",
            Error::DegenerateSample(_) => "degenerate-sample",
            Error::Usage(_) => "usage",
            Error::Format { .. } => "format",
            Error::Corruption { .. } => "corruption",
            Error::MissingStage { .. } => "missing-stage",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn dims(context: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            context,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

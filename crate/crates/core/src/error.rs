use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("chain failed at step {step}: {message}")]
    Chain { step: u64, message: String },
    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("ensemble member with seed {seed}: {source}")]
    Member {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 2 config, 3 data format, 4 numeric/chain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Capacity(_) => 2,
            Error::Format { .. } | Error::Shape(_) | Error::Io(_) => 3,
            Error::Numeric(_)
            | Error::Training { .. }
            | Error::Chain { .. }
            | Error::Evaluation(_) => 4,
            Error::Sample { source, .. }
            | Error::Member { source, .. }
            | Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::format(e.column() as u64, format!("json line {}: {e}", e.line()))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let offset = e.position().map(|p| p.byte()).unwrap_or(0);
        Error::format(offset, e.to_string())
    }
}

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// A single validation failure, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:\n{}", format_fields(.0))]
    Config(Vec<FieldError>),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("missing quadrature for condition {0}")]
    MissingQuadrature(String),

    #[error("shot-record schema version {found} is not supported (expected {expected}); re-run the scenario or migrate the file")]
    Schema { found: u32, expected: u32 },

    #[error("malformed record file {path}: {message}")]
    Records { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("  {f}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Fit(_) | Error::EmptyGroup(_) | Error::MissingQuadrature(_) => 3,
            Error::Schema { .. } | Error::Records { .. } | Error::Io { .. } | Error::Json { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

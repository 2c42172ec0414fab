use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0} is empty")]
    Empty(String),

    #[error("invalid dataset field `{field}`: {message}")]
    Dataset { field: String, message: String },

    #[error("split is not disjoint: {0}")]
    Disjointness(String),

    #[error("bad magic in matrix file (expected ZSMX, found {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported matrix file version {0}")]
    UnsupportedVersion(u8),

    #[error("matrix file dtype mismatch: expected code {expected}, found {found}")]
    Dtype { expected: u8, found: u8 },

    #[error("truncated matrix file: header announces {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("missing prerequisite: stage `{stage}` has no output at {path}")]
    MissingPrerequisite { stage: String, path: PathBuf },

    #[error("stale checkpoint for stage `{stage}`: recorded hash {recorded}, expected {expected}")]
    StaleCheckpoint {
        stage: String,
        recorded: String,
        expected: String,
    },

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the binary's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::NonFinite(_) => "non_finite",
            Error::Empty(_) => "empty",
            Error::Dataset { .. } => "dataset",
            Error::Disjointness(_) => "disjointness",
            Error::BadMagic(_) => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Dtype { .. } => "dtype",
            Error::Truncated { .. } => "truncated",
            Error::MissingPrerequisite { .. } => "missing_prerequisite",
            Error::StaleCheckpoint { .. } => "stale_checkpoint",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("unknown corruption kind `{0}`")]
    UnknownCorruption(String),

    #[error("severity {0} is outside 1..=5")]
    Severity(u8),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unsupported format or version in {what}")]
    Version { what: &'static str },

    #[error("truncated {what}")]
    Truncated { what: &'static str },

    #[error("checksum mismatch in {what}: stored {stored:08x}, computed {computed:08x}")]
    Checksum {
        what: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("config hash mismatch: file was written for {found}, current config is {expected}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error("missing prerequisite {path}: {hint}")]
    MissingPrerequisite { path: PathBuf, hint: String },

    #[error("{path} is stale: {reason}")]
    Stale { path: PathBuf, reason: String },

    #[error("training history is empty")]
    EmptyHistory,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

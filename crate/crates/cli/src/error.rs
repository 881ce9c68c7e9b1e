//! CLI-level errors: everything a command can print before exiting nonzero.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tscn_core::Error),

    #[error("{path}:{line}:{column}: {message}")]
    ConfigParse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data spec '{spec}': {reason}")]
    DataSpec { spec: String, reason: String },

    #[error("{path}: not a checkpoint ({reason})")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("checkpoint expects {expected} input, dataset images are {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

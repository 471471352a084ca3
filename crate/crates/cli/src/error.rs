use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] mfbvar::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything the user can fix in the
    /// configuration or the input files.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Model(e) if e.is_numerical() => "numerical",
            CliError::Model(_) => "input",
        }
    }

    pub fn record(&self, command: &str) -> ErrorRecord {
        ErrorRecord {
            command: command.to_string(),
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable failure written to standard error and `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

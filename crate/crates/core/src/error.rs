use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GnpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GnpError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: empty dataset")]
    EmptyDataset(PathBuf),

    #[error("format: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl GnpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GnpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category tag used as the machine-parsable error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            GnpError::Config(_) => "config",
            GnpError::Io { .. } => "io",
            GnpError::Parse { .. } | GnpError::EmptyDataset(_) | GnpError::Format(_) => "data",
            GnpError::DimMismatch(_) | GnpError::Invalid(_) => "data",
            GnpError::Numerical(_) => "numerical",
        }
    }

    /// Process exit code: 2 config, 3 data (including I/O), 4 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            GnpError::Config(_) => 2,
            GnpError::Numerical(_) => 4,
            _ => 3,
        }
    }
}

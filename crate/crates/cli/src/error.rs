use std::path::PathBuf;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing or stale artifact {artifact}: run `intra-lab {command}` first")]
    Dependency { artifact: PathBuf, command: &'static str },
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Dependency { .. } => 3,
            LabError::Data(_) => 4,
            LabError::Io { .. } => 1,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        LabError::Config(msg.to_string())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        LabError::Data(msg.to_string())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

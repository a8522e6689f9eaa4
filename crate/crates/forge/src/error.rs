use std::path::PathBuf;

use crate::backend::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error(transparent)]
    Core(#[from] medforge_core::Error),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl ForgeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ForgeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for bad input or configuration, 2 for IO and
    /// transport failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Io { .. } | ForgeError::Backend(_) => 2,
            ForgeError::Core(medforge_core::Error::Translate { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

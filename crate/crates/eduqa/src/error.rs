use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Core(#[from] eduqa_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing prerequisite: {0}")]
    Missing(PathBuf),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("external reader: {0}")]
    Protocol(String),
    #[error("external reader: request `{id}` timed out")]
    Timeout { id: String },
    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// 2 for bad input or a missing prerequisite, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Missing(_) | Error::Parse { .. } | Error::Validation(_) => 2,
            Error::Core(e) => match e {
                eduqa_core::Error::Diverged { .. } | eduqa_core::Error::Backend(_) => 1,
                _ => 2,
            },
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

/// Fails with [`Error::Missing`] unless `path` exists.
pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Missing(path.to_path_buf()))
    }
}

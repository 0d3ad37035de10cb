use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Core(#[from] nephroscope_core::Error),
    #[error("{0}")]
    Ingest(#[from] crate::csv_io::IngestError),
    #[error("safety: {0} blocking expectation(s) failed")]
    BlockingSafetyFailure(usize),
}

impl AppError {
    /// 1 usage, 2 data or file problems, 3 blocking safety failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::BlockingSafetyFailure(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

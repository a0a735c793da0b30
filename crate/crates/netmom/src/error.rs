use std::path::PathBuf;

/// Process exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Core { context: String, source: netmom_core::Error },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config { .. } => exit::USAGE,
            AppError::Core { source, .. } if source.is_numerical() => exit::NUMERICAL,
            _ => exit::DATA,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }

    pub fn core(context: impl Into<String>) -> impl FnOnce(netmom_core::Error) -> AppError {
        let context = context.into();
        move |source| AppError::Core { context, source }
    }
}

pub type AppResult<T> = Result<T, AppError>;

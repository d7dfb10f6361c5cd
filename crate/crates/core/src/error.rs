use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix for component {component} is not positive definite ({what})")]
    NotPositiveDefinite { component: usize, what: &'static str },

    #[error("bead precision for component {component}, mode {mode} is not positive definite")]
    ModeNotPositiveDefinite { component: usize, mode: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid anneal setting: {0}")]
    InvalidAnneal(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub(crate) fn format(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for failures that originate in floating-point arithmetic rather
    /// than in bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ModeNotPositiveDefinite { .. }
                | Error::Numerical(_)
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Each variant maps to a stable machine-readable code (see [`Error::code`]),
/// which the HTTP layer forwards verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{message}")]
    Validation { code: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("scene spec: {0}")]
    Scene(String),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("session is busy: {0}")]
    Busy(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("session file version {found} is not supported (expected {expected})")]
    Migration { found: u32, expected: u32 },

    #[error("adapter protocol error: {0}")]
    Protocol(String),

    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("non-finite loss {loss} at micro step {micro_step} (optimizer step {optimizer_step}, lr {lr})")]
    NonFiniteLoss {
        micro_step: u64,
        optimizer_step: u64,
        lr: f64,
        loss: f64,
    },
}

impl Error {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(origin: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation { code, .. } => code,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "not_found",
            Error::Io { .. } => "io_error",
            Error::Parse { .. } => "parse_error",
            Error::Scene(_) => "scene_spec_error",
            Error::Image { .. } => "image_error",
            Error::Busy(_) => "busy",
            Error::State(_) => "invalid_state",
            Error::Migration { .. } => "version_mismatch",
            Error::Protocol(_) => "protocol_error",
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. })
    }
}

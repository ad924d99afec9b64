//! Failure classes and their process exit codes.

use sdcd_core::analysis::AnalysisError;
use sdcd_core::backend::synthetic::SceneError;
use sdcd_core::metrics::MetricsError;
use sdcd_core::{BackendError, DecodeError, ImageError, ViewError};
use thiserror::Error;

/// Stable exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// A replay or rerun produced different results.
    pub const MISMATCH: u8 = 1;
    /// Invalid arguments or empty input.
    pub const USAGE: u8 = 2;
    /// File-system failures and malformed records.
    pub const IO: u8 = 3;
    /// Violated preconditions or configuration invariants.
    pub const PRECONDITION: u8 = 4;
    /// Unreachable or failing model backend.
    pub const BACKEND: u8 = 5;
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::new(exit::IO, format!("{}: {e}", path.display()))
    }
}

fn backend_code(e: &BackendError) -> u8 {
    match e {
        BackendError::ContextOverflow { .. }
        | BackendError::TokenizerUnavailable(_)
        | BackendError::InvalidArgument(_)
        | BackendError::InvalidImage(_) => exit::PRECONDITION,
        _ => exit::BACKEND,
    }
}

fn decode_code(e: &DecodeError) -> u8 {
    match e {
        DecodeError::Backend(b) => backend_code(b),
        DecodeError::TraceWriteFailure(_) | DecodeError::MalformedTrace(_) => exit::IO,
        DecodeError::ReplayMismatch { .. } => exit::MISMATCH,
        _ => exit::PRECONDITION,
    }
}

fn metrics_code(e: &MetricsError) -> u8 {
    match e {
        MetricsError::EmptyInput => exit::USAGE,
        _ => exit::IO,
    }
}

fn analysis_code(e: &AnalysisError) -> u8 {
    match e {
        AnalysisError::EmptyInput(_) | AnalysisError::InvalidGrid(_) => exit::USAGE,
        AnalysisError::EmbedderFailure(_) | AnalysisError::View(_) => exit::PRECONDITION,
        AnalysisError::Decode(d) => decode_code(d),
        AnalysisError::Backend(b) => backend_code(b),
        AnalysisError::Metrics(m) => metrics_code(m),
        AnalysisError::Scene(_) | AnalysisError::Image(_) | AnalysisError::Io { .. } => exit::IO,
    }
}

macro_rules! classify {
    ($($ty:ty => $f:expr),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let code: fn(&$ty) -> u8 = $f;
                Self::new(code(&e), e.to_string())
            }
        })*
    };
}

classify! {
    ViewError => |_| exit::PRECONDITION,
    ImageError => |_| exit::IO,
    SceneError => |_| exit::IO,
    BackendError => backend_code,
    DecodeError => decode_code,
    MetricsError => metrics_code,
    AnalysisError => analysis_code,
}

//! Dual-view contrastive decoding.

mod calibrate;
mod config;
mod engine;
mod sampling;
pub mod trace;

use thiserror::Error;

use crate::backend::BackendError;
use crate::view::ViewError;

pub use calibrate::{masked_distribution, plausibility_mask, sdcd_calibrate};
pub use config::{DecodingConfig, NegativeViewKind};
pub use engine::{build_views, decode_step, generate, generate_with_views, regular_generate, Generation, NegativeView, StepOutcome, Views};
pub use sampling::{argmax, nucleus, sample_token, SamplingMode};
pub use trace::{GenerationTrace, TraceHeader, TraceStep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("LengthMismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("EmptyCandidateSet: every token was masked")]
    EmptyCandidateSet,
    #[error("DegenerateDistribution: {0}")]
    DegenerateDistribution(String),
    #[error("config invariant violated: {0}")]
    Config(String),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("TraceWriteFailure: {0}")]
    TraceWriteFailure(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("replay diverged at step {step}: {detail}")]
    ReplayMismatch { step: usize, detail: String },
}

//! Next-token logit providers conditioned on an encoded image view and a
//! token prefix.
//!
//! [`SyntheticBackend`] is a closed-form, deterministic model used for
//! desk-scale verification; [`RemoteBackend`] talks to an out-of-process model
//! server over the HTTP wire protocol.

pub mod features;
pub mod remote;
pub mod synthetic;
pub mod vocab;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageGrid;
use crate::logits::LogitVector;

pub use remote::RemoteBackend;
pub use synthetic::{SceneObject, SyntheticBackend, SyntheticSceneSpec};

pub type TokenId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("BoostUnsupported: backend `{0}` cannot apply an image-attention boost")]
    BoostUnsupported(String),
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("ContextOverflow: prefix of {len} tokens exceeds context limit {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("InvalidHandle: {0}")]
    InvalidHandle(String),
    #[error("ProtocolViolation: {0}")]
    ProtocolViolation(String),
    #[error("InvalidImage: {0}")]
    InvalidImage(String),
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("backend `{0}` does not expose a tokenizer")]
    TokenizerUnavailable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Static facts about a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub vocab_size: usize,
    pub yes_id: TokenId,
    pub no_id: TokenId,
    pub eos_id: TokenId,
    pub context_limit: usize,
    pub supports_attention_boost: bool,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        let ids = [self.yes_id, self.no_id, self.eos_id];
        if ids.iter().any(|&id| id as usize >= self.vocab_size) {
            return Err(BackendError::ProtocolViolation(format!(
                "special token ids {ids:?} out of range for vocab size {}",
                self.vocab_size
            )));
        }
        if self.yes_id == self.no_id || self.yes_id == self.eos_id || self.no_id == self.eos_id {
            return Err(BackendError::ProtocolViolation(format!("special token ids {ids:?} are not distinct")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewLabel {
    Original,
    Shuffled,
    Noise,
}

impl ViewLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Shuffled => "shuffled",
            Self::Noise => "noise",
        }
    }
}

/// An encoded view. Only meaningful to the backend instance that issued it.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewHandle {
    pub(crate) backend_instance: u64,
    pub(crate) session: String,
    pub label: ViewLabel,
    pub attention_boost: f64,
}

impl ViewHandle {
    pub fn session(&self) -> &str {
        &self.session
    }
}

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_instance_id() -> u64 {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

/// A model returning full-vocabulary next-token logits for `(view, prefix)`.
///
/// Implementations must tolerate concurrent calls; a single handle is used by
/// one generation at a time.
pub trait LogitBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn encode_view(&self, image: &ImageGrid, label: ViewLabel, attention_boost: f64) -> Result<ViewHandle, BackendError>;

    fn next_token_logits(&self, view: &ViewHandle, prefix: &[TokenId]) -> Result<LogitVector, BackendError>;

    /// Drops any state held for `view`.
    fn release_view(&self, _view: &ViewHandle) {}

    fn tokenize(&self, _text: &str) -> Result<Vec<TokenId>, BackendError> {
        Err(BackendError::TokenizerUnavailable(self.descriptor().name.clone()))
    }

    fn detokenize(&self, _tokens: &[TokenId]) -> Result<String, BackendError> {
        Err(BackendError::TokenizerUnavailable(self.descriptor().name.clone()))
    }
}

pub(crate) fn check_boost(descriptor: &BackendDescriptor, boost: f64) -> Result<(), BackendError> {
    if !(boost >= 0.0 && boost.is_finite()) {
        return Err(BackendError::InvalidArgument(format!("attention boost must be >= 0, got {boost}")));
    }
    if boost > 0.0 && !descriptor.supports_attention_boost {
        return Err(BackendError::BoostUnsupported(descriptor.name.clone()));
    }
    Ok(())
}

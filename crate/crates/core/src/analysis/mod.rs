//! Desk-scale diagnostics: structure-sensitivity probing, bag-of-patches
//! robustness, the synthetic evaluation set and the alpha / shuffle-size
//! sweeps.

pub mod bop;
pub mod dataset;
pub mod report;
pub mod ssd;
pub mod sweep;

use thiserror::Error;

use crate::backend::synthetic::SceneError;
use crate::backend::BackendError;
use crate::decoding::DecodeError;
use crate::image::ImageError;
use crate::metrics::MetricsError;
use crate::view::ViewError;

pub use bop::{bop_probe, BopCurve, BopPoint, BoundaryAwareEmbedder, Embedder, TextureSignatureEmbedder};
pub use dataset::{DatasetConfig, EvalCase, SyntheticDataset, SyntheticScene};
pub use ssd::{ssd_probe, SsdAggregate, SsdRecord, SsdReport};
pub use sweep::{alpha_sweep, evaluate_cases, shuffle_size_sweep, SweepCell, SweepKind, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("EmptyInput: {0}")]
    EmptyInput(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("EmbedderFailure: {0}")]
    EmbedderFailure(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnalysisError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

//! Structure-disrupted contrastive decoding for vision-language models.
//!
//! A negative view is built by shuffling the image's patches; next-token
//! logits under the original and shuffled views are contrasted before
//! sampling. The crate also carries the hallucination metrics and the
//! diagnostic probes and sweeps built on top of the decoder.

pub mod analysis;
pub mod backend;
pub mod decoding;
pub mod image;
pub mod logits;
pub mod metrics;
pub mod prompt;
pub mod view;

pub use backend::{BackendDescriptor, BackendError, LogitBackend, RemoteBackend, SyntheticBackend, TokenId, ViewHandle, ViewLabel};
pub use decoding::{generate, regular_generate, sdcd_calibrate, DecodeError, DecodingConfig, Generation, GenerationTrace, NegativeViewKind, SamplingMode};
pub use image::{ImageError, ImageGrid};
pub use logits::{softmax, LogitVector};
pub use view::{shuffle_patches, ShuffleSpec, ViewError};

//! The autoregressive dual-view generation loop.
//!
//! Per step both views see the identical prefix (prompt plus tokens sampled so
//! far). The original-view logits decide the plausibility mask, the calibrated
//! logits decide the distribution over surviving tokens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trace::{GenerationTrace, TraceHeader, TraceStep};
use super::{masked_distribution, plausibility_mask, sample_token, sdcd_calibrate, DecodeError, DecodingConfig, NegativeViewKind};
use crate::backend::{BackendError, LogitBackend, TokenId, ViewHandle, ViewLabel};
use crate::image::ImageGrid;
use crate::logits::LogitVector;
use crate::view::{gaussian_noise_view, shuffle_patches, ShuffleSpec};

/// A negative view ready for encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeView {
    pub kind: NegativeViewKind,
    pub image: ImageGrid,
    pub shuffle: Option<ShuffleSpec>,
}

/// The image pair a generation conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct Views {
    pub original: ImageGrid,
    pub negative: Option<NegativeView>,
}

impl Views {
    pub fn original_only(image: ImageGrid) -> Self {
        Self {
            original: image,
            negative: None,
        }
    }
}

/// Builds the negative view named by `config.negative_view`. The shuffle
/// permutation is drawn once from `config.shuffle_seed`.
pub fn build_views(image: &ImageGrid, config: &DecodingConfig) -> Result<Views, DecodeError> {
    let negative = match config.negative_view {
        NegativeViewKind::None => None,
        NegativeViewKind::Shuffle => {
            let spec = ShuffleSpec::for_image(image, config.shuffle_size, config.shuffle_seed)?;
            Some(NegativeView {
                kind: NegativeViewKind::Shuffle,
                image: shuffle_patches(image, &spec)?,
                shuffle: Some(spec),
            })
        }
        NegativeViewKind::Noise => Some(NegativeView {
            kind: NegativeViewKind::Noise,
            image: gaussian_noise_view(image, config.noise_sigma, config.shuffle_seed)?,
            shuffle: None,
        }),
    };
    Ok(Views {
        original: image.clone(),
        negative,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Sampled tokens, without the terminating EOS.
    pub tokens: Vec<TokenId>,
    /// Whether generation stopped on EOS rather than the token budget.
    pub finished: bool,
    pub trace: GenerationTrace,
}

/// Result of one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub mask: Vec<bool>,
    pub distribution: Vec<f64>,
    pub token: TokenId,
}

/// Calibrate, mask, renormalize and sample. Shared by generation and replay.
pub fn decode_step(
    original: &LogitVector,
    negative: Option<&LogitVector>,
    config: &DecodingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, DecodeError> {
    let calibrated = match negative {
        Some(neg) => sdcd_calibrate(original, neg, config.alpha)?,
        None => original.clone(),
    };
    let mask = plausibility_mask(original, config.beta)?;
    let distribution = masked_distribution(&calibrated, &mask, config.temperature)?;
    let token = sample_token(&distribution, config.mode, config.top_p, rng)?;
    Ok(StepOutcome {
        mask,
        distribution,
        token,
    })
}

/// Releases encoded views when generation ends, including on error.
struct Encoded<'a> {
    backend: &'a dyn LogitBackend,
    handles: Vec<ViewHandle>,
}

impl Drop for Encoded<'_> {
    fn drop(&mut self) {
        for h in &self.handles {
            self.backend.release_view(h);
        }
    }
}

/// Narrows to float32 (what traces store) and checks the shape.
fn receive(backend: &dyn LogitBackend, logits: LogitVector) -> Result<LogitVector, DecodeError> {
    let expected = backend.descriptor().vocab_size;
    if logits.len() != expected {
        return Err(BackendError::ProtocolViolation(format!("got {} logits, vocab size is {expected}", logits.len())).into());
    }
    let narrowed = LogitVector::from_f32(&logits.to_f32());
    if !narrowed.all_finite() {
        return Err(BackendError::ProtocolViolation("non-finite logits".into()).into());
    }
    Ok(narrowed)
}

/// Contrastive generation on pre-built views.
pub fn generate_with_views(
    backend: &dyn LogitBackend,
    views: &Views,
    prompt: &[TokenId],
    config: &DecodingConfig,
) -> Result<Generation, DecodeError> {
    config.validate()?;
    let descriptor = backend.descriptor().clone();
    let mut encoded = Encoded {
        backend,
        handles: Vec::with_capacity(2),
    };
    encoded.handles.push(backend.encode_view(&views.original, ViewLabel::Original, config.gamma)?);
    if let Some(neg) = &views.negative {
        let label = match neg.kind {
            NegativeViewKind::Noise => ViewLabel::Noise,
            _ => ViewLabel::Shuffled,
        };
        encoded
            .handles
            .push(backend.encode_view(&neg.image, label, config.negative_boost())?);
    }
    let original = &encoded.handles[0];
    let negative = encoded.handles.get(1);

    let header = TraceHeader::new(
        config.clone(),
        views.negative.as_ref().map(|n| n.kind),
        views.negative.as_ref().and_then(|n| n.shuffle.clone()),
        prompt.to_vec(),
        descriptor.clone(),
    );
    let mut trace = GenerationTrace::new(header);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut prefix = prompt.to_vec();
    let mut tokens = Vec::new();
    let mut finished = false;

    for t in 0..config.max_new_tokens {
        let (lv, lvp) = match negative {
            Some(neg) => {
                let (a, b) = rayon::join(
                    || backend.next_token_logits(original, &prefix),
                    || backend.next_token_logits(neg, &prefix),
                );
                (a?, Some(b?))
            }
            None => (backend.next_token_logits(original, &prefix)?, None),
        };
        let lv = receive(backend, lv)?;
        let lvp = lvp.map(|l| receive(backend, l)).transpose()?;
        let step = decode_step(&lv, lvp.as_ref(), config, &mut rng)?;
        trace.steps.push(TraceStep {
            t,
            logits_v: lv.to_f32(),
            logits_vprime: lvp.as_ref().map(LogitVector::to_f32),
            mask: step.mask,
            dist: step.distribution,
            token: step.token,
        });
        if step.token == descriptor.eos_id {
            finished = true;
            break;
        }
        tokens.push(step.token);
        prefix.push(step.token);
    }
    Ok(Generation { tokens, finished, trace })
}

/// Builds views per `config` and runs contrastive generation.
pub fn generate(
    backend: &dyn LogitBackend,
    image: &ImageGrid,
    prompt: &[TokenId],
    config: &DecodingConfig,
) -> Result<Generation, DecodeError> {
    config.validate()?;
    let views = build_views(image, config)?;
    generate_with_views(backend, &views, prompt, config)
}

/// Single-view decoding with the same mask and sampler; equivalent to
/// [`generate`] with `negative_view = none`.
pub fn regular_generate(
    backend: &dyn LogitBackend,
    image: &ImageGrid,
    prompt: &[TokenId],
    config: &DecodingConfig,
) -> Result<Generation, DecodeError> {
    let config = DecodingConfig {
        negative_view: NegativeViewKind::None,
        ..config.clone()
    };
    generate_with_views(backend, &Views::original_only(image.clone()), prompt, &config)
}

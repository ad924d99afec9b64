//! Closed-form scene model with a structural and a texture evidence channel.
//!
//! For a binary probe about object `o` on a view with boost `g`:
//!
//! ```text
//! yes = (1 + g) * [ w_s * coh * m_s + w_t * m_t * (1 + r * (1 - coh)) ]
//! no  = C0 - yes
//! ```
//!
//! `coh` is [`structural_coherence`] at the scene's feature scale, `m_s` the
//! template correlation, `m_t` the texture-signature similarity and `r` the
//! object's texture release: texture evidence that intact global structure
//! holds back and that comes through as coherence falls. With `r = 0` the
//! texture channel is exactly permutation invariant. Every other vocabulary
//! entry sits at [`NEG_LOGIT`].
//!
//! Caption prompts score each unmentioned object with its YES-NO margin
//! against an EOS logit of 0, so greedy decoding lists every object whose
//! margin is positive and then stops.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{signature_similarity, structural_coherence, template_match, texture_signature};
use super::vocab::Vocabulary;
use super::{check_boost, next_instance_id, BackendDescriptor, BackendError, LogitBackend, TokenId, ViewHandle, ViewLabel};
use crate::image::{ImageError, ImageGrid};
use crate::logits::LogitVector;
use crate::view::{preprocess_to_grid, ResizePolicy};

/// NO-logit offset.
pub const C0: f64 = 1.0;
pub const NEG_LOGIT: f32 = -100.0;
pub const DEFAULT_FEATURE_PATCH: usize = 14;
pub const CONTEXT_LIMIT: usize = 1024;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("scene i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("template image: {0}")]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub name: String,
    pub structural_weight: f64,
    pub texture_weight: f64,
    pub texture_release: f64,
    pub template: Option<ImageGrid>,
    pub texture_signature: Vec<f64>,
    pub ground_truth_present: bool,
}

impl SceneObject {
    fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Invalid(format!("object `{}`: {msg}", self.name)));
        let (ws, wt) = (self.structural_weight, self.texture_weight);
        if !(ws.is_finite() && wt.is_finite() && ws >= 0.0 && wt >= 0.0) {
            return bad(format!("weights must be finite and >= 0 (w_s={ws}, w_t={wt})"));
        }
        if ws + wt <= 0.0 {
            return bad("w_s + w_t must be positive".into());
        }
        if !(self.texture_release.is_finite() && self.texture_release >= 0.0) {
            return bad(format!("texture_release must be >= 0, got {}", self.texture_release));
        }
        if ws > 0.0 && self.template.is_none() {
            return bad("a structural weight needs a template".into());
        }
        if wt > 0.0 {
            let sig = &self.texture_signature;
            if sig.is_empty() || sig.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad("texture signature must be a non-empty non-negative histogram".into());
            }
            let total: f64 = sig.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return bad(format!("texture signature sums to {total}"));
            }
        }
        Ok(())
    }
}

/// Objects a synthetic backend knows about.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    /// Patch size at which coherence and texture signatures are measured.
    pub feature_patch: usize,
    pub objects: Vec<SceneObject>,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    #[serde(default = "default_feature_patch")]
    feature_patch: usize,
    objects: Vec<ObjectRecord>,
}

fn default_feature_patch() -> usize {
    DEFAULT_FEATURE_PATCH
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    name: String,
    structural_weight: f64,
    texture_weight: f64,
    #[serde(default)]
    texture_release: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<PathBuf>,
    #[serde(default)]
    texture_signature: Vec<f64>,
    ground_truth_present: bool,
}

impl SyntheticSceneSpec {
    pub fn new(feature_patch: usize, objects: Vec<SceneObject>) -> Result<Self, SceneError> {
        let spec = Self { feature_patch, objects };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.feature_patch == 0 {
            return Err(SceneError::Invalid("feature_patch must be >= 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.name.to_lowercase()) {
                return Err(SceneError::Invalid(format!("duplicate object `{}`", o.name)));
            }
            o.validate()?;
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name.eq_ignore_ascii_case(name))
    }

    /// Loads a JSON scene; template paths are relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let file: SceneFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let objects = file
            .objects
            .into_iter()
            .map(|r| {
                let template = r.template.map(|t| ImageGrid::read(base.join(t))).transpose()?;
                Ok(SceneObject {
                    name: r.name,
                    structural_weight: r.structural_weight,
                    texture_weight: r.texture_weight,
                    texture_release: r.texture_release,
                    template,
                    texture_signature: r.texture_signature,
                    ground_truth_present: r.ground_truth_present,
                })
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        Self::new(file.feature_patch, objects)
    }

    /// Writes the scene JSON and one PNG per template next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
        let mut objects = Vec::with_capacity(self.objects.len());
        for o in &self.objects {
            let template = match &o.template {
                Some(img) => {
                    let name = PathBuf::from(format!("{stem}.{}.template.png", o.name.replace(' ', "_")));
                    img.write(base.join(&name))?;
                    Some(name)
                }
                None => None,
            };
            objects.push(ObjectRecord {
                name: o.name.clone(),
                structural_weight: o.structural_weight,
                texture_weight: o.texture_weight,
                texture_release: o.texture_release,
                template,
                texture_signature: o.texture_signature.clone(),
                ground_truth_present: o.ground_truth_present,
            });
        }
        let file = SceneFile {
            feature_patch: self.feature_patch,
            objects,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
        Ok(())
    }
}

/// What an encoded view remembers: the boost and per-object evidence.
#[derive(Debug, Clone)]
struct EncodedView {
    boost: f64,
    coherence: f64,
    /// `(m_s, m_t)` per scene object, in scene order.
    matches: Vec<(f64, f64)>,
}

impl EncodedView {
    fn yes_logit(&self, scene: &SyntheticSceneSpec, object: usize) -> f64 {
        let o = &scene.objects[object];
        let (m_s, m_t) = self.matches[object];
        let structural = o.structural_weight * self.coherence * m_s;
        let texture = o.texture_weight * m_t * (1.0 + o.texture_release * (1.0 - self.coherence));
        (1.0 + self.boost) * (structural + texture)
    }
}

/// Deterministic backend driven by a [`SyntheticSceneSpec`].
pub struct SyntheticBackend {
    instance: u64,
    scene: SyntheticSceneSpec,
    vocab: Vocabulary,
    /// Token id of each scene object.
    object_tokens: Vec<TokenId>,
    descriptor: BackendDescriptor,
    views: RwLock<HashMap<String, Arc<EncodedView>>>,
    next_view: AtomicU64,
}

impl std::fmt::Debug for SyntheticBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticBackend")
            .field("instance", &self.instance)
            .field("objects", &self.scene.objects.len())
            .finish_non_exhaustive()
    }
}

enum PromptKind {
    Probe { object: Option<usize>, answered: bool },
    Caption { mentioned: Vec<usize> },
    Other,
}

impl SyntheticBackend {
    pub fn new(scene: SyntheticSceneSpec) -> Result<Self, SceneError> {
        Self::with_vocabulary(scene, std::iter::empty())
    }

    /// Adds `extra_words` after the scene's object names, so several scenes
    /// can share one token layout.
    pub fn with_vocabulary<'a>(
        scene: SyntheticSceneSpec,
        extra_words: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, SceneError> {
        scene.validate()?;
        let names: Vec<String> = scene.objects.iter().map(|o| o.name.to_lowercase()).collect();
        let extra: Vec<String> = extra_words.into_iter().map(str::to_string).collect();
        let words: Vec<&str> = names.iter().chain(&extra).map(String::as_str).collect();
        let vocab = Vocabulary::with_words(words).map_err(SceneError::Invalid)?;
        let object_tokens = names
            .iter()
            .map(|n| vocab.id(n).expect("object names are in the vocabulary"))
            .collect::<Vec<_>>();
        if let Some(clash) = object_tokens.iter().find(|&&t| (t as usize) < super::vocab::BASE_TOKENS.len()) {
            return Err(SceneError::Invalid(format!(
                "object name `{}` collides with a reserved word",
                vocab.word(*clash).unwrap_or("?")
            )));
        }
        let instance = next_instance_id();
        let descriptor = BackendDescriptor {
            name: format!("synthetic-{instance}"),
            vocab_size: vocab.len(),
            yes_id: vocab.yes(),
            no_id: vocab.no(),
            eos_id: vocab.eos(),
            context_limit: CONTEXT_LIMIT,
            supports_attention_boost: true,
        };
        Ok(Self {
            instance,
            scene,
            vocab,
            object_tokens,
            descriptor,
            views: RwLock::new(HashMap::new()),
            next_view: AtomicU64::new(0),
        })
    }

    pub fn scene(&self) -> &SyntheticSceneSpec {
        &self.scene
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn object_token(&self, name: &str) -> Option<TokenId> {
        let idx = self.scene.objects.iter().position(|o| o.name.eq_ignore_ascii_case(name))?;
        Some(self.object_tokens[idx])
    }

    fn lookup(&self, view: &ViewHandle) -> Result<Arc<EncodedView>, BackendError> {
        if view.backend_instance != self.instance {
            return Err(BackendError::InvalidHandle(format!(
                "view `{}` was issued by another backend",
                view.session
            )));
        }
        self.views
            .read()
            .expect("view table lock poisoned")
            .get(&view.session)
            .cloned()
            .ok_or_else(|| BackendError::InvalidHandle(format!("unknown or released view `{}`", view.session)))
    }

    /// Coherence the backend measured for `view`.
    pub fn view_coherence(&self, view: &ViewHandle) -> Result<f64, BackendError> {
        Ok(self.lookup(view)?.coherence)
    }

    /// YES logit of a binary probe about `object` (0 for undeclared objects).
    pub fn yes_logit(&self, view: &ViewHandle, object: &str) -> Result<f64, BackendError> {
        let encoded = self.lookup(view)?;
        Ok(self
            .scene
            .objects
            .iter()
            .position(|o| o.name.eq_ignore_ascii_case(object))
            .map_or(0.0, |i| encoded.yes_logit(&self.scene, i)))
    }

    fn object_index(&self, token: TokenId) -> Option<usize> {
        self.object_tokens.iter().position(|&t| t == token)
    }

    fn classify(&self, prefix: &[TokenId]) -> PromptKind {
        let question = self.vocab.id("?").expect("base token");
        if let Some(q) = prefix.iter().rposition(|&t| t == question) {
            let object = prefix[..q].iter().rev().find_map(|&t| self.object_index(t));
            let answered = prefix[q + 1..]
                .iter()
                .any(|&t| t == self.vocab.yes() || t == self.vocab.no());
            return PromptKind::Probe { object, answered };
        }
        let describe = self.vocab.id("describe").expect("base token");
        let period = self.vocab.id(".").expect("base token");
        if let Some(d) = prefix.iter().position(|&t| t == describe) {
            let start = prefix[d..].iter().position(|&t| t == period).map_or(prefix.len(), |p| d + p + 1);
            let mut mentioned: Vec<usize> = prefix[start..].iter().filter_map(|&t| self.object_index(t)).collect();
            mentioned.sort_unstable();
            mentioned.dedup();
            return PromptKind::Caption { mentioned };
        }
        PromptKind::Other
    }
}

impl LogitBackend for SyntheticBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_view(&self, image: &ImageGrid, label: ViewLabel, attention_boost: f64) -> Result<ViewHandle, BackendError> {
        check_boost(&self.descriptor, attention_boost)?;
        let patch = self.scene.feature_patch;
        let grid = preprocess_to_grid(image, patch, ResizePolicy::Crop).map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        let coherence = structural_coherence(&grid, patch).map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        let mut signatures: HashMap<usize, Vec<f64>> = HashMap::new();
        let mut matches = Vec::with_capacity(self.scene.objects.len());
        for o in &self.scene.objects {
            let m_s = match (&o.template, o.structural_weight > 0.0) {
                (Some(t), true) => template_match(&grid, t),
                _ => 0.0,
            };
            let m_t = if o.texture_signature.is_empty() {
                0.0
            } else {
                let bins = o.texture_signature.len();
                let sig = match signatures.get(&bins) {
                    Some(s) => s,
                    None => {
                        let s = texture_signature(&grid, patch, bins).map_err(|e| BackendError::InvalidImage(e.to_string()))?;
                        signatures.entry(bins).or_insert(s)
                    }
                };
                signature_similarity(sig, &o.texture_signature)
            };
            matches.push((m_s, m_t));
        }
        let session = format!("syn-{}-{}", self.instance, self.next_view.fetch_add(1, Ordering::Relaxed));
        self.views.write().expect("view table lock poisoned").insert(
            session.clone(),
            Arc::new(EncodedView {
                boost: attention_boost,
                coherence,
                matches,
            }),
        );
        Ok(ViewHandle {
            backend_instance: self.instance,
            session,
            label,
            attention_boost,
        })
    }

    fn next_token_logits(&self, view: &ViewHandle, prefix: &[TokenId]) -> Result<LogitVector, BackendError> {
        let encoded = self.lookup(view)?;
        if prefix.len() > CONTEXT_LIMIT {
            return Err(BackendError::ContextOverflow {
                len: prefix.len(),
                limit: CONTEXT_LIMIT,
            });
        }
        let mut logits = vec![NEG_LOGIT; self.vocab.len()];
        let eos = self.vocab.eos() as usize;
        match self.classify(prefix) {
            PromptKind::Probe { answered: true, .. } | PromptKind::Other => logits[eos] = 0.0,
            PromptKind::Probe { object, answered: false } => {
                let yes = object.map_or(0.0, |i| encoded.yes_logit(&self.scene, i));
                logits[self.vocab.yes() as usize] = yes as f32;
                logits[self.vocab.no() as usize] = (C0 - yes) as f32;
            }
            PromptKind::Caption { mentioned } => {
                logits[eos] = 0.0;
                for (i, &token) in self.object_tokens.iter().enumerate() {
                    if mentioned.binary_search(&i).is_err() {
                        let yes = encoded.yes_logit(&self.scene, i);
                        logits[token as usize] = (2.0 * yes - C0) as f32;
                    }
                }
            }
        }
        Ok(LogitVector::from_f32(&logits))
    }

    fn release_view(&self, view: &ViewHandle) {
        if view.backend_instance == self.instance {
            self.views.write().expect("view table lock poisoned").remove(&view.session);
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        Ok(self.vocab.tokenize(text))
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, BackendError> {
        Ok(self.vocab.detokenize(tokens))
    }
}

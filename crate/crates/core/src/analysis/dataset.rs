//! Seeded synthetic evaluation set.
//!
//! Every scene is a smooth grayscale field (linear ramp plus a sinusoid) and
//! declares two objects:
//!
//! * a real object carried by structure: `w_s = 1`, the scene image as
//!   template, a small texture weight, present in ground truth;
//! * a texture bait: `w_s = 0`, a texture weight in `bait_weight`, the scene's
//!   own patch-mean signature and texture release `bait_release`, absent.
//!
//! The first half of the scenes probe the real object, the rest the bait.
//! Strata cycle random / popular / adversarial.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backend::features::texture_signature;
use crate::backend::{LogitBackend, SceneObject, SyntheticBackend, SyntheticSceneSpec};
use crate::image::ImageGrid;
use crate::metrics::io::{read_jsonl, write_jsonl, PopeItemRecord};
use crate::metrics::{ChairAnnotation, PopeItem, Stratum, SynonymEntry};

const REAL_NAMES: [&str; 10] = ["dog", "car", "chair", "bottle", "cup", "book", "clock", "bench", "horse", "boat"];
const BAIT_NAMES: [&str; 10] = ["cat", "bus", "couch", "vase", "bowl", "kite", "bird", "train", "sheep", "truck"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scenes: usize,
    /// Square image side in pixels.
    pub size: usize,
    pub seed: u64,
    pub feature_patch: usize,
    pub signature_bins: usize,
    /// Upper bound of the real objects' texture weight.
    pub real_texture_max: f64,
    /// Range of the bait texture weight.
    pub bait_weight: (f64, f64),
    pub bait_release: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scenes: 100,
            size: 224,
            seed: 0,
            feature_patch: 14,
            signature_bins: 8,
            real_texture_max: 0.05,
            bait_weight: (0.25, 0.45),
            bait_release: 1.0,
        }
    }
}

/// One probe item with the backend that answers it.
#[derive(Clone)]
pub struct EvalCase {
    pub id: String,
    pub image: ImageGrid,
    pub object: String,
    pub ground_truth: bool,
    pub stratum: Stratum,
    pub backend: Arc<dyn LogitBackend>,
}

impl fmt::Debug for EvalCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvalCase")
            .field("id", &self.id)
            .field("object", &self.object)
            .field("ground_truth", &self.ground_truth)
            .field("stratum", &self.stratum)
            .field("backend", &self.backend.descriptor().name)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub id: String,
    pub image: ImageGrid,
    pub spec: SyntheticSceneSpec,
    /// The probed object.
    pub object: String,
    pub ground_truth: bool,
    pub stratum: Stratum,
}

impl SyntheticScene {
    pub fn real_object(&self) -> &SceneObject {
        self.spec.objects.iter().find(|o| o.ground_truth_present).expect("every scene has a real object")
    }

    pub fn bait_object(&self) -> &SceneObject {
        self.spec.objects.iter().find(|o| !o.ground_truth_present).expect("every scene has a bait")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: DatasetConfig,
    pub scenes: Vec<SyntheticScene>,
}

/// Ramp plus sinusoid, kept well inside `[0, 255]` so nothing clips.
pub fn gradient_image(size: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
    use std::f64::consts::TAU;
    let theta = rng.random_range(0.0..TAU);
    let slope = rng.random_range(0.25..0.5);
    let (gx, gy) = (slope * theta.cos(), slope * theta.sin());
    let amplitude = rng.random_range(8.0..24.0);
    let period = rng.random_range(40.0..90.0);
    let phi = rng.random_range(0.0..TAU);
    let phase = rng.random_range(0.0..TAU);
    let (fx, fy) = (phi.cos() / period, phi.sin() / period);
    let half = size as f64 / 2.0;
    ImageGrid::from_fn_gray(size, size, |r, c| {
        let (x, y) = (c as f64 - half, r as f64 - half);
        let v = 128.0 + gx * x + gy * y + amplitude * (TAU * (fx * x + fy * y) + phase).sin();
        v.round().clamp(0.0, 255.0) as u8
    })
    .expect("non-empty square image")
}

#[derive(Serialize, Deserialize)]
struct ItemLine {
    #[serde(flatten)]
    item: PopeItemRecord,
    scene: String,
}

impl SyntheticDataset {
    pub fn generate(config: DatasetConfig) -> Result<Self, AnalysisError> {
        if config.scenes == 0 {
            return Err(AnalysisError::EmptyInput("dataset needs at least one scene".into()));
        }
        let (lo, hi) = config.bait_weight;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(AnalysisError::InvalidGrid(format!("bait_weight range ({lo}, {hi}) is invalid")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let half = config.scenes / 2;
        let mut scenes = Vec::with_capacity(config.scenes);
        for i in 0..config.scenes {
            let image = gradient_image(config.size, &mut rng);
            let signature = texture_signature(&image, config.feature_patch, config.signature_bins)?;
            let real_weight = rng.random_range(0.0..=config.real_texture_max);
            let bait_weight = if lo == hi { lo } else { rng.random_range(lo..hi) };
            let real = SceneObject {
                name: REAL_NAMES[i % REAL_NAMES.len()].into(),
                structural_weight: 1.0,
                texture_weight: real_weight,
                texture_release: 0.0,
                template: Some(image.clone()),
                texture_signature: signature.clone(),
                ground_truth_present: true,
            };
            let bait = SceneObject {
                name: BAIT_NAMES[i % BAIT_NAMES.len()].into(),
                structural_weight: 0.0,
                texture_weight: bait_weight,
                texture_release: config.bait_release,
                template: None,
                texture_signature: signature,
                ground_truth_present: false,
            };
            let probe_real = i < half;
            let object = if probe_real { real.name.clone() } else { bait.name.clone() };
            scenes.push(SyntheticScene {
                id: format!("scene_{i:03}"),
                image,
                spec: SyntheticSceneSpec::new(config.feature_patch, vec![real, bait])?,
                object,
                ground_truth: probe_real,
                stratum: Stratum::ALL[i % Stratum::ALL.len()],
            });
        }
        Ok(Self { config, scenes })
    }

    /// One synthetic backend per scene.
    pub fn cases(&self) -> Result<Vec<EvalCase>, AnalysisError> {
        self.scenes
            .iter()
            .map(|s| {
                Ok(EvalCase {
                    id: s.id.clone(),
                    image: s.image.clone(),
                    object: s.object.clone(),
                    ground_truth: s.ground_truth,
                    stratum: s.stratum,
                    backend: Arc::new(SyntheticBackend::new(s.spec.clone())?),
                })
            })
            .collect()
    }

    pub fn pope_items(&self) -> Vec<PopeItem> {
        self.scenes
            .iter()
            .map(|s| PopeItem {
                id: s.id.clone(),
                image: format!("{}.png", s.id),
                object: s.object.clone(),
                ground_truth: s.ground_truth,
                stratum: s.stratum,
            })
            .collect()
    }

    /// Ground-truth objects per image for caption scoring.
    pub fn annotations(&self) -> Vec<ChairAnnotation> {
        self.scenes
            .iter()
            .map(|s| ChairAnnotation {
                image: format!("{}.png", s.id),
                objects: std::iter::once(s.real_object().name.clone()).collect(),
            })
            .collect()
    }

    pub fn synonyms(&self) -> Vec<SynonymEntry> {
        REAL_NAMES
            .iter()
            .chain(BAIT_NAMES.iter())
            .map(|n| SynonymEntry {
                canonical: n.to_string(),
                surface_forms: vec![format!("{n}s")],
            })
            .collect()
    }

    /// Writes `dataset.json`, `items.jsonl`, `annotations.jsonl`,
    /// `synonyms.jsonl` and per scene a PNG plus its scene file.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), AnalysisError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| AnalysisError::io(dir, e))?;
        let config_path = dir.join("dataset.json");
        let config = serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n";
        std::fs::write(&config_path, config).map_err(|e| AnalysisError::io(&config_path, e))?;
        let mut lines = Vec::with_capacity(self.scenes.len());
        for (scene, item) in self.scenes.iter().zip(self.pope_items()) {
            scene.image.write(dir.join(&item.image))?;
            let scene_file = format!("{}.scene.json", scene.id);
            scene.spec.save(dir.join(&scene_file))?;
            lines.push(ItemLine {
                item: PopeItemRecord::from(&item),
                scene: scene_file,
            });
        }
        let write = |name: &str, result: std::io::Result<()>| result.map_err(|e| AnalysisError::io(&dir.join(name), e));
        write("items.jsonl", write_jsonl(dir.join("items.jsonl"), &lines))?;
        write("annotations.jsonl", write_jsonl(dir.join("annotations.jsonl"), &self.annotations()))?;
        write("synonyms.jsonl", write_jsonl(dir.join("synonyms.jsonl"), &self.synonyms()))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let dir = dir.as_ref();
        let config_path = dir.join("dataset.json");
        let text = std::fs::read_to_string(&config_path).map_err(|e| AnalysisError::io(&config_path, e))?;
        let config: DatasetConfig = serde_json::from_str(&text)
            .map_err(|e| AnalysisError::io(&config_path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        let lines: Vec<ItemLine> = read_jsonl(dir.join("items.jsonl"))?;
        let scenes = lines
            .into_iter()
            .map(|line| {
                let item = PopeItem::from(line.item);
                Ok(SyntheticScene {
                    image: ImageGrid::read(dir.join(&item.image))?,
                    spec: SyntheticSceneSpec::load(dir.join(&line.scene))?,
                    id: item.id,
                    object: item.object,
                    ground_truth: item.ground_truth,
                    stratum: item.stratum,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        if scenes.is_empty() {
            return Err(AnalysisError::EmptyInput(format!("{} lists no items", dir.display())));
        }
        Ok(Self { config, scenes })
    }
}

/// Probe items answered by one shared backend; image paths resolve against
/// `base`.
pub fn cases_from_items(
    items: &[PopeItem],
    base: &Path,
    backend: Arc<dyn LogitBackend>,
) -> Result<Vec<EvalCase>, AnalysisError> {
    items
        .iter()
        .map(|item| {
            let path: PathBuf = base.join(&item.image);
            Ok(EvalCase {
                id: item.id.clone(),
                image: ImageGrid::read(&path)?,
                object: item.object.clone(),
                ground_truth: item.ground_truth,
                stratum: item.stratum,
                backend: backend.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::features::structural_coherence;

    fn small() -> DatasetConfig {
        DatasetConfig {
            scenes: 6,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = SyntheticDataset::generate(small()).unwrap();
        assert_eq!(a, SyntheticDataset::generate(small()).unwrap());
        let b = SyntheticDataset::generate(DatasetConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.scenes[0].image, b.scenes[0].image);
    }

    #[test]
    fn layout_and_labels() {
        let d = SyntheticDataset::generate(small()).unwrap();
        assert_eq!(d.scenes.iter().filter(|s| s.ground_truth).count(), 3);
        for s in &d.scenes {
            assert_eq!(s.spec.object(&s.object).unwrap().ground_truth_present, s.ground_truth);
            let coh = structural_coherence(&s.image, 14).unwrap();
            assert!((0.3..0.7).contains(&coh), "coherence {coh}");
        }
        assert_eq!(d.scenes[4].stratum, Stratum::Popular);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = SyntheticDataset::generate(DatasetConfig { scenes: 2, ..small() }).unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(SyntheticDataset::load(dir.path()).unwrap(), d);
    }
}

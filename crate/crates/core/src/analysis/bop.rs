//! Bag-of-patches probe: how close an embedder keeps an image and its
//! patch-shuffled versions, per shuffle size.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backend::features::{boundary_continuity, texture_signature};
use crate::image::ImageGrid;
use crate::view::{shuffle_patches, ShuffleSpec};

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, image: &ImageGrid) -> Result<Vec<f64>, AnalysisError>;
}

/// Histogram of patch-mean luminance. Blind to patch order whenever the
/// shuffle size is a multiple of `patch_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSignatureEmbedder {
    pub patch_size: usize,
    pub bins: usize,
}

impl Default for TextureSignatureEmbedder {
    fn default() -> Self {
        Self { patch_size: 7, bins: 16 }
    }
}

impl Embedder for TextureSignatureEmbedder {
    fn name(&self) -> &str {
        "texture-signature"
    }

    fn embed(&self, image: &ImageGrid) -> Result<Vec<f64>, AnalysisError> {
        texture_signature(image, self.patch_size, self.bins).map_err(|e| AnalysisError::EmbedderFailure(e.to_string()))
    }
}

/// Boundary continuity at several patch scales plus a constant coordinate,
/// so a uniform drop in continuity still turns the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryAwareEmbedder {
    pub scales: Vec<usize>,
    pub tolerance: f64,
}

impl Default for BoundaryAwareEmbedder {
    fn default() -> Self {
        Self {
            scales: vec![7, 14, 28, 56, 112],
            tolerance: 3.0,
        }
    }
}

impl Embedder for BoundaryAwareEmbedder {
    fn name(&self) -> &str {
        "boundary-aware"
    }

    fn embed(&self, image: &ImageGrid) -> Result<Vec<f64>, AnalysisError> {
        let mut v = self
            .scales
            .iter()
            .map(|&s| boundary_continuity(image, s, self.tolerance))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AnalysisError::EmbedderFailure(e.to_string()))?;
        v.push(1.0);
        Ok(v)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BopPoint {
    pub shuffle_size: usize,
    pub mean_cosine: f64,
    /// Image-seed pairs averaged.
    pub pairs: usize,
    /// Fraction of pairs whose nearest label prototype is unchanged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retention: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BopCurve {
    pub embedder: String,
    pub points: Vec<BopPoint>,
}

fn checked(embedder: &dyn Embedder, image: &ImageGrid, dim: Option<usize>) -> Result<Vec<f64>, AnalysisError> {
    let v = embedder.embed(image)?;
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::EmbedderFailure(format!("{} produced an empty or non-finite vector", embedder.name())));
    }
    if let Some(d) = dim {
        if v.len() != d {
            return Err(AnalysisError::EmbedderFailure(format!(
                "{} produced length {} after {d}",
                embedder.name(),
                v.len()
            )));
        }
    }
    Ok(v)
}

/// Label whose prototype (mean original embedding) is most cosine-similar;
/// ties go to the first label in sorted order.
fn nearest(prototypes: &BTreeMap<&str, Vec<f64>>, v: &[f64]) -> String {
    let mut best: Option<(&str, f64)> = None;
    for (label, p) in prototypes {
        let c = cosine(p, v);
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((label, c));
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}

/// Mean cosine similarity between `embed(V)` and `embed(V')` per shuffle
/// size, over every image and seed. With `labels`, also the retention of
/// nearest-prototype retrieval.
pub fn bop_probe(
    embedder: &dyn Embedder,
    images: &[ImageGrid],
    labels: Option<&[String]>,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<BopCurve, AnalysisError> {
    if images.is_empty() || sizes.is_empty() || seeds.is_empty() {
        return Err(AnalysisError::EmptyInput("bop probe needs images, sizes and seeds".into()));
    }
    if labels.is_some_and(|l| l.len() != images.len()) {
        return Err(AnalysisError::InvalidGrid("one label per image is required".into()));
    }
    let first = checked(embedder, &images[0], None)?;
    let dim = first.len();
    let originals = images
        .par_iter()
        .map(|img| checked(embedder, img, Some(dim)))
        .collect::<Result<Vec<_>, _>>()?;

    let prototypes = labels.map(|labels| {
        let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
        for (label, v) in labels.iter().zip(&originals) {
            let e = sums.entry(label.as_str()).or_insert_with(|| (vec![0.0; dim], 0));
            e.0.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(k, (s, n))| (k, s.into_iter().map(|x| x / n as f64).collect::<Vec<_>>()))
            .collect::<BTreeMap<_, _>>()
    });
    let before: Option<Vec<String>> = prototypes.as_ref().map(|p| originals.iter().map(|v| nearest(p, v)).collect());

    let points = sizes
        .iter()
        .map(|&s| {
            let jobs: Vec<(usize, u64)> = (0..images.len()).flat_map(|i| seeds.iter().map(move |&seed| (i, seed))).collect();
            let results = jobs
                .par_iter()
                .map(|&(i, seed)| {
                    let spec = ShuffleSpec::for_image(&images[i], s, seed)?;
                    let v = checked(embedder, &shuffle_patches(&images[i], &spec)?, Some(dim))?;
                    let kept = match (&prototypes, &before) {
                        (Some(p), Some(b)) => Some(nearest(p, &v) == b[i]),
                        _ => None,
                    };
                    Ok((cosine(&originals[i], &v), kept))
                })
                .collect::<Result<Vec<_>, AnalysisError>>()?;
            let n = results.len();
            let mean_cosine = results.iter().map(|r| r.0).sum::<f64>() / n as f64;
            let retention = labels.map(|_| results.iter().filter(|r| r.1 == Some(true)).count() as f64 / n as f64);
            Ok(BopPoint {
                shuffle_size: s,
                mean_cosine,
                pairs: n,
                retention,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(BopCurve {
        embedder: embedder.name().to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::dataset::gradient_image;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn images(n: usize) -> Vec<ImageGrid> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n).map(|_| gradient_image(224, &mut rng)).collect()
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[2.0, 0.0]), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0], &[0.0]), 1.0);
    }

    #[test]
    fn identity_size_is_exact_for_any_embedder() {
        let imgs = images(2);
        for e in [&TextureSignatureEmbedder::default() as &dyn Embedder, &BoundaryAwareEmbedder::default()] {
            let curve = bop_probe(e, &imgs, None, &[224], &[0, 1]).unwrap();
            assert!((curve.points[0].mean_cosine - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn retention_with_labels() {
        let imgs = images(4);
        let labels: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let curve = bop_probe(&TextureSignatureEmbedder::default(), &imgs, Some(&labels), &[14], &[0]).unwrap();
        assert_eq!(curve.points[0].retention, Some(1.0));
        assert!(bop_probe(&TextureSignatureEmbedder::default(), &imgs, Some(&labels[..2]), &[14], &[0]).is_err());
    }

    struct Broken;
    impl Embedder for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn embed(&self, _: &ImageGrid) -> Result<Vec<f64>, AnalysisError> {
            Ok(vec![f64::NAN])
        }
    }

    #[test]
    fn non_finite_embedding_fails() {
        assert!(matches!(
            bop_probe(&Broken, &images(1), None, &[14], &[0]),
            Err(AnalysisError::EmbedderFailure(_))
        ));
    }
}

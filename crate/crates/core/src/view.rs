//! Negative-view construction: patch partition, seeded permutation,
//! patch shuffling, grid preprocessing and the Gaussian-noise alternative.
//!
//! Every transform here is a pure function of its inputs and seed.

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("NonDivisibleDimensions: {height}x{width} is not divisible by patch size {patch_size}")]
    NonDivisibleDimensions {
        height: usize,
        width: usize,
        patch_size: usize,
    },
    #[error("SpecMismatch: shuffle spec has {spec} patches but the image partitions into {image}")]
    SpecMismatch { spec: usize, image: usize },
    #[error("ImageTooSmall: {height}x{width} is smaller than patch size {patch_size}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch_size: usize,
    },
    #[error("invalid patch size {0}")]
    InvalidPatchSize(usize),
    #[error("permutation of length {0} is not a bijection")]
    NotABijection(usize),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
}

/// One `S x S x C` block, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Patch {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

/// Patch-grid geometry of an image at a given patch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn of(image: &ImageGrid, patch_size: usize) -> Result<Self, ViewError> {
        Self::for_dims(image.height(), image.width(), patch_size)
    }

    pub fn for_dims(height: usize, width: usize, patch_size: usize) -> Result<Self, ViewError> {
        if patch_size == 0 {
            return Err(ViewError::InvalidPatchSize(0));
        }
        if !height.is_multiple_of(patch_size) || !width.is_multiple_of(patch_size) {
            return Err(ViewError::NonDivisibleDimensions {
                height,
                width,
                patch_size,
            });
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `image` into `(H/S)(W/S)` patches in row-major patch order.
pub fn partition(image: &ImageGrid, patch_size: usize) -> Result<Vec<Patch>, ViewError> {
    let grid = PatchGrid::of(image, patch_size)?;
    let c = image.channels();
    let row_len = patch_size * c;
    let mut patches = Vec::with_capacity(grid.len());
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let mut data = Vec::with_capacity(patch_size * row_len);
            for r in 0..patch_size {
                let start = image.index(pr * patch_size + r, pc * patch_size, 0);
                data.extend_from_slice(&image.data()[start..start + row_len]);
            }
            patches.push(Patch {
                size: patch_size,
                channels: c,
                data,
            });
        }
    }
    Ok(patches)
}

/// Inverse of [`partition`]: lays `patches` out row-major on a `rows x cols` grid.
pub fn assemble(patches: &[Patch], rows: usize, cols: usize) -> Result<ImageGrid, ViewError> {
    let first = patches.first().ok_or(ViewError::SpecMismatch { spec: 0, image: rows * cols })?;
    if patches.len() != rows * cols {
        return Err(ViewError::SpecMismatch {
            spec: patches.len(),
            image: rows * cols,
        });
    }
    let (s, c) = (first.size, first.channels);
    let (height, width) = (rows * s, cols * s);
    let mut data = vec![0u8; height * width * c];
    let row_len = s * c;
    for (i, patch) in patches.iter().enumerate() {
        let (pr, pc) = (i / cols, i % cols);
        for r in 0..s {
            let dst = ((pr * s + r) * width + pc * s) * c;
            data[dst..dst + row_len].copy_from_slice(&patch.data[r * row_len..(r + 1) * row_len]);
        }
    }
    Ok(ImageGrid::new(height, width, c, data).expect("assembled shape is consistent"))
}

/// Uniform permutation of `0..n` by a seeded Fisher-Yates shuffle.
/// `n == 0` yields the empty permutation.
pub fn make_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm
}

pub fn is_bijection(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Everything needed to rebuild a shuffled view bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShuffleSpecRecord", into = "ShuffleSpecRecord")]
pub struct ShuffleSpec {
    patch_size: usize,
    seed: u64,
    permutation: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ShuffleSpecRecord {
    #[serde(rename = "S")]
    patch_size: usize,
    seed: u64,
    #[serde(rename = "N")]
    num_patches: usize,
    permutation: Vec<usize>,
}

impl TryFrom<ShuffleSpecRecord> for ShuffleSpec {
    type Error = ViewError;

    fn try_from(r: ShuffleSpecRecord) -> Result<Self, Self::Error> {
        if r.permutation.len() != r.num_patches {
            return Err(ViewError::SpecMismatch {
                spec: r.num_patches,
                image: r.permutation.len(),
            });
        }
        Self::from_permutation(r.patch_size, r.seed, r.permutation)
    }
}

impl From<ShuffleSpec> for ShuffleSpecRecord {
    fn from(s: ShuffleSpec) -> Self {
        Self {
            patch_size: s.patch_size,
            seed: s.seed,
            num_patches: s.permutation.len(),
            permutation: s.permutation,
        }
    }
}

impl ShuffleSpec {
    /// Draws the permutation for an image of the given dimensions.
    pub fn generate(height: usize, width: usize, patch_size: usize, seed: u64) -> Result<Self, ViewError> {
        let grid = PatchGrid::for_dims(height, width, patch_size)?;
        Ok(Self {
            patch_size,
            seed,
            permutation: make_permutation(grid.len(), seed),
        })
    }

    pub fn for_image(image: &ImageGrid, patch_size: usize, seed: u64) -> Result<Self, ViewError> {
        Self::generate(image.height(), image.width(), patch_size, seed)
    }

    /// Wraps an explicit permutation. `seed` is recorded but not re-checked.
    pub fn from_permutation(patch_size: usize, seed: u64, permutation: Vec<usize>) -> Result<Self, ViewError> {
        if patch_size == 0 {
            return Err(ViewError::InvalidPatchSize(0));
        }
        if permutation.is_empty() || !is_bijection(&permutation) {
            return Err(ViewError::NotABijection(permutation.len()));
        }
        Ok(Self {
            patch_size,
            seed,
            permutation,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_patches(&self) -> usize {
        self.permutation.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// True when `permutation` is exactly what `(N, seed)` regenerates.
    pub fn is_reproducible(&self) -> bool {
        make_permutation(self.num_patches(), self.seed) == self.permutation
    }

    pub fn inverse(&self) -> Self {
        Self {
            patch_size: self.patch_size,
            seed: self.seed,
            permutation: invert_permutation(&self.permutation),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("shuffle spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Output patch `i` is input patch `permutation[i]`.
pub fn shuffle_patches(image: &ImageGrid, spec: &ShuffleSpec) -> Result<ImageGrid, ViewError> {
    let grid = PatchGrid::of(image, spec.patch_size)?;
    if grid.len() != spec.num_patches() {
        return Err(ViewError::SpecMismatch {
            spec: spec.num_patches(),
            image: grid.len(),
        });
    }
    let patches = partition(image, spec.patch_size)?;
    let shuffled: Vec<Patch> = spec.permutation.iter().map(|&src| patches[src].clone()).collect();
    assemble(&shuffled, grid.rows, grid.cols)
}

/// How to reach S-divisible dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizePolicy {
    /// Centered crop to the largest multiples of S.
    #[default]
    Crop,
    /// Bilinear resample to the nearest multiples of S.
    Resize,
}

impl std::str::FromStr for ResizePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crop" => Ok(Self::Crop),
            "resize" => Ok(Self::Resize),
            other => Err(format!("unknown resize policy `{other}` (expected crop|resize)")),
        }
    }
}

pub fn preprocess_to_grid(image: &ImageGrid, patch_size: usize, policy: ResizePolicy) -> Result<ImageGrid, ViewError> {
    if patch_size == 0 {
        return Err(ViewError::InvalidPatchSize(0));
    }
    let (h, w) = (image.height(), image.width());
    if h < patch_size || w < patch_size {
        return Err(ViewError::ImageTooSmall {
            height: h,
            width: w,
            patch_size,
        });
    }
    if h % patch_size == 0 && w % patch_size == 0 {
        return Ok(image.clone());
    }
    match policy {
        ResizePolicy::Crop => {
            let (nh, nw) = (h / patch_size * patch_size, w / patch_size * patch_size);
            Ok(image
                .crop((h - nh) / 2, (w - nw) / 2, nh, nw)
                .expect("crop window lies inside the image"))
        }
        ResizePolicy::Resize => {
            let nearest = |d: usize| (((d as f64) / patch_size as f64).round() as usize).max(1) * patch_size;
            let (nh, nw) = (nearest(h), nearest(w));
            let resized = image.to_dynamic().resize_exact(nw as u32, nh as u32, FilterType::Triangle);
            let out = ImageGrid::from_dynamic(resized);
            Ok(if out.channels() == image.channels() {
                out
            } else {
                ImageGrid::from_dynamic(image::DynamicImage::ImageLuma8(out.to_dynamic().to_luma8()))
            })
        }
    }
}

/// Additive zero-mean Gaussian noise, rounded and clamped to `[0, 255]`.
pub fn gaussian_noise_view(image: &ImageGrid, sigma: f64, seed: u64) -> Result<ImageGrid, ViewError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(ViewError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| ViewError::InvalidSigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = image
        .data()
        .iter()
        .map(|&v| (f64::from(v) + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(ImageGrid::new(image.height(), image.width(), image.channels(), data).expect("same shape as input"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> ImageGrid {
        ImageGrid::from_fn_gray(h, w, |r, c| ((r * w + c) % 251) as u8).unwrap()
    }

    #[test]
    fn partition_counts_and_order() {
        let img = ramp(28, 28);
        assert_eq!(partition(&img, 14).unwrap().len(), 4);

        let tiny = ImageGrid::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        let patches = partition(&tiny, 1).unwrap();
        let values: Vec<u8> = patches.iter().map(|p| p.data[0]).collect();
        assert_eq!(values, vec![1, 2, 3, 4]);

        let single = ramp(14, 14);
        let one = partition(&single, 14).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].data, single.data());
    }

    #[test]
    fn partition_rejects_non_divisible() {
        let err = partition(&ramp(30, 28), 14).unwrap_err();
        assert_eq!(
            err,
            ViewError::NonDivisibleDimensions {
                height: 30,
                width: 28,
                patch_size: 14
            }
        );
    }

    #[test]
    fn partition_then_assemble_is_identity() {
        let img = ImageGrid::new(6, 9, 3, (0..162).map(|i| i as u8).collect()).unwrap();
        let patches = partition(&img, 3).unwrap();
        assert_eq!(assemble(&patches, 2, 3).unwrap(), img);
    }

    #[test]
    fn permutation_basics() {
        assert_eq!(make_permutation(1, 99), vec![0]);
        assert_eq!(make_permutation(4, 7), make_permutation(4, 7));
        assert!(is_bijection(&make_permutation(500, 3)));
        assert!(!is_bijection(&[0, 0, 2]));
        assert!(!is_bijection(&[0, 3]));
    }

    #[test]
    fn permutation_is_uniform_over_three_elements() {
        // Brute-force frequency count over all 3! outcomes.
        let mut counts = std::collections::HashMap::new();
        for seed in 0..6000u64 {
            *counts.entry(make_permutation(3, seed)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (perm, n) in counts {
            let freq = n as f64 / 6000.0;
            assert!((freq - 1.0 / 6.0).abs() <= 0.03, "{perm:?}: {freq}");
        }
    }

    #[test]
    fn identity_shuffle_is_noop() {
        let img = ramp(28, 42);
        let spec = ShuffleSpec::from_permutation(14, 0, (0..6).collect()).unwrap();
        assert_eq!(shuffle_patches(&img, &spec).unwrap(), img);
    }

    #[test]
    fn reverse_shuffle_pixel_by_pixel() {
        // 2x2 grid of 2x2 patches; patch k filled with value 10 * k.
        let img = ImageGrid::from_fn_gray(4, 4, |r, c| (10 * ((r / 2) * 2 + c / 2)) as u8).unwrap();
        let spec = ShuffleSpec::from_permutation(2, 0, vec![3, 2, 1, 0]).unwrap();
        let out = shuffle_patches(&img, &spec).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let out_patch = (r / 2) * 2 + c / 2;
                assert_eq!(out.get(r, c, 0), (10 * (3 - out_patch)) as u8);
            }
        }
    }

    #[test]
    fn shuffle_rejects_mismatched_spec() {
        let spec = ShuffleSpec::generate(28, 28, 14, 1).unwrap();
        let err = shuffle_patches(&ramp(42, 28), &spec).unwrap_err();
        assert_eq!(err, ViewError::SpecMismatch { spec: 4, image: 6 });
    }

    #[test]
    fn spec_json_roundtrip_and_validation() {
        let spec = ShuffleSpec::generate(56, 28, 14, 11).unwrap();
        let text = spec.to_json();
        assert!(text.contains("\"S\": 14") && text.contains("\"N\": 8"));
        let back = ShuffleSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert!(back.is_reproducible());
        assert!(ShuffleSpec::from_json(r#"{"S":1,"seed":0,"N":2,"permutation":[1,1]}"#).is_err());
        assert!(ShuffleSpec::from_json(r#"{"S":1,"seed":0,"N":3,"permutation":[1,0]}"#).is_err());
    }

    #[test]
    fn preprocess_cases() {
        let square = ramp(224, 224);
        assert_eq!(preprocess_to_grid(&square, 14, ResizePolicy::Crop).unwrap(), square);

        let img = ramp(30, 30);
        let cropped = preprocess_to_grid(&img, 14, ResizePolicy::Crop).unwrap();
        assert_eq!((cropped.height(), cropped.width()), (28, 28));
        assert_eq!(cropped, img.crop(1, 1, 28, 28).unwrap());

        let resized = preprocess_to_grid(&ramp(30, 50), 14, ResizePolicy::Resize).unwrap();
        assert_eq!((resized.height(), resized.width(), resized.channels()), (28, 56, 1));

        assert!(matches!(
            preprocess_to_grid(&ramp(10, 10), 14, ResizePolicy::Crop),
            Err(ViewError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn noise_view() {
        let img = ImageGrid::filled(224, 224, 1, 128).unwrap();
        assert_eq!(gaussian_noise_view(&img, 0.0, 5).unwrap(), img);
        let a = gaussian_noise_view(&img, 25.0, 5).unwrap();
        assert_eq!(a, gaussian_noise_view(&img, 25.0, 5).unwrap());
        assert_ne!(a, gaussian_noise_view(&img, 25.0, 6).unwrap());

        let n = a.data().len() as f64;
        let mean = a.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = a.data().iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((22.0..=28.0).contains(&std), "std = {std}");
        assert!(gaussian_noise_view(&img, -1.0, 0).is_err());
    }
}

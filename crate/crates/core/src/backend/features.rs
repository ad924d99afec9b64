//! Pixel statistics the synthetic backend conditions on.

use crate::image::ImageGrid;
use crate::view::{PatchGrid, ViewError};

/// Floor applied to the within-patch difference term.
pub const COHERENCE_EPSILON: f64 = 1e-6;

/// Within-patch vs. across-boundary smoothness in `[0, 1]`.
///
/// `W_in / (W_in + B)` where `B` is the mean absolute luminance step over
/// adjacent pixel pairs straddling a patch boundary, `W_in` the same over
/// pairs inside a patch (floored at [`COHERENCE_EPSILON`]). A grid without
/// boundaries has `B = 0`.
pub fn structural_coherence(image: &ImageGrid, patch_size: usize) -> Result<f64, ViewError> {
    PatchGrid::of(image, patch_size)?;
    let lum = image.luminance();
    let (h, w) = (image.height(), image.width());
    let (mut inner_sum, mut inner_n) = (0.0, 0usize);
    let (mut edge_sum, mut edge_n) = (0.0, 0usize);
    for r in 0..h {
        let row = &lum[r * w..(r + 1) * w];
        for c in 0..w - 1 {
            let d = (row[c + 1] - row[c]).abs();
            if (c + 1) % patch_size == 0 {
                edge_sum += d;
                edge_n += 1;
            } else {
                inner_sum += d;
                inner_n += 1;
            }
        }
    }
    for r in 0..h - 1 {
        let boundary = (r + 1) % patch_size == 0;
        for c in 0..w {
            let d = (lum[(r + 1) * w + c] - lum[r * w + c]).abs();
            if boundary {
                edge_sum += d;
                edge_n += 1;
            } else {
                inner_sum += d;
                inner_n += 1;
            }
        }
    }
    let inner = if inner_n == 0 { 0.0 } else { inner_sum / inner_n as f64 };
    let edge = if edge_n == 0 { 0.0 } else { edge_sum / edge_n as f64 };
    let inner = inner.max(COHERENCE_EPSILON);
    Ok(inner / (inner + edge))
}

/// Luminance steps of 4-neighbour pairs, split into `(inside, straddling)`
/// a patch boundary.
fn boundary_steps(image: &ImageGrid, patch_size: usize) -> (Vec<f64>, Vec<f64>) {
    let lum = image.luminance();
    let (h, w) = (image.height(), image.width());
    let (mut inner, mut edge) = (Vec::new(), Vec::new());
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                let d = (lum[r * w + c + 1] - lum[r * w + c]).abs();
                if (c + 1) % patch_size == 0 { edge.push(d) } else { inner.push(d) }
            }
            if r + 1 < h {
                let d = (lum[(r + 1) * w + c] - lum[r * w + c]).abs();
                if (r + 1) % patch_size == 0 { edge.push(d) } else { inner.push(d) }
            }
        }
    }
    (inner, edge)
}

/// Fraction of pixel pairs straddling a patch boundary whose luminance step
/// is at most `tolerance` times the mean within-patch step plus one
/// intensity level. 1 when there are no boundaries.
///
/// Unlike [`structural_coherence`], a few large jumps do not swamp the
/// measure: it falls in proportion to the number of broken boundaries.
pub fn boundary_continuity(image: &ImageGrid, patch_size: usize, tolerance: f64) -> Result<f64, ViewError> {
    PatchGrid::of(image, patch_size)?;
    let (inner, edge) = boundary_steps(image, patch_size);
    if edge.is_empty() {
        return Ok(1.0);
    }
    let mean_inner = if inner.is_empty() { 0.0 } else { inner.iter().sum::<f64>() / inner.len() as f64 };
    let limit = tolerance * mean_inner + 1.0;
    Ok(edge.iter().filter(|&&d| d <= limit).count() as f64 / edge.len() as f64)
}

/// Mean luminance of every patch, row-major.
pub fn patch_means(image: &ImageGrid, patch_size: usize) -> Result<Vec<f64>, ViewError> {
    let grid = PatchGrid::of(image, patch_size)?;
    let lum = image.luminance();
    let w = image.width();
    let mut sums = vec![0.0; grid.len()];
    for (i, v) in lum.iter().enumerate() {
        let (r, c) = (i / w, i % w);
        sums[(r / patch_size) * grid.cols + c / patch_size] += v;
    }
    let area = (patch_size * patch_size) as f64;
    Ok(sums.into_iter().map(|s| s / area).collect())
}

/// Normalized histogram of per-patch mean luminance over `bins` equal-width
/// bins spanning `[0, 256)`.
pub fn texture_signature(image: &ImageGrid, patch_size: usize, bins: usize) -> Result<Vec<f64>, ViewError> {
    if bins == 0 {
        return Err(ViewError::InvalidPatchSize(0));
    }
    let means = patch_means(image, patch_size)?;
    let mut hist = vec![0.0; bins];
    for m in &means {
        let b = ((m * bins as f64 / 256.0).floor() as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let n = means.len() as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    Ok(hist)
}

/// `1 - TV(a, b)`; 0 when the supports have different lengths.
pub fn signature_similarity(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return 0.0;
    }
    let tv = 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    (1.0 - tv).clamp(0.0, 1.0)
}

/// Pearson correlation of the two luminance fields, clamped to `[0, 1]`.
/// The template is resampled to the image size first. Constant fields score 0.
pub fn template_match(image: &ImageGrid, template: &ImageGrid) -> f64 {
    let resized;
    let template = if (template.height(), template.width()) == (image.height(), image.width()) {
        template
    } else {
        resized = ImageGrid::from_dynamic(template.to_dynamic().resize_exact(
            image.width() as u32,
            image.height() as u32,
            image::imageops::FilterType::Triangle,
        ));
        &resized
    };
    let a = image.luminance();
    let b = template.luminance();
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(0.0, 1.0)
}

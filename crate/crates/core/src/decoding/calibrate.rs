//! Dual-view logit calibration, plausibility masking and the masked softmax.

use crate::logits::{softmax, LogitVector};

use super::DecodeError;

/// Contrastive calibration `(1 + alpha) * original - alpha * negative`.
///
/// Evaluated as `original + alpha * (original - negative)`, which is the same
/// quantity but returns `original` bit-for-bit when `alpha == 0` or when both
/// views agree.
pub fn sdcd_calibrate(original: &LogitVector, negative: &LogitVector, alpha: f64) -> Result<LogitVector, DecodeError> {
    if original.len() != negative.len() {
        return Err(DecodeError::LengthMismatch {
            left: original.len(),
            right: negative.len(),
        });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DecodeError::InvalidParameter(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(original
        .values()
        .iter()
        .zip(negative.values())
        .map(|(&a, &b)| a + alpha * (a - b))
        .collect::<Vec<_>>()
        .into())
}

/// Keeps token `y` iff `p(y) >= beta * max p` under `softmax(original)`.
///
/// The argmax always survives since the ratio there is exactly 1.
pub fn plausibility_mask(original: &LogitVector, beta: f64) -> Result<Vec<bool>, DecodeError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(DecodeError::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    let max = original.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(original.values().iter().map(|&v| (v - max).exp() >= beta).collect())
}

/// `softmax(calibrated / temperature)` restricted to unmasked tokens.
pub fn masked_distribution(calibrated: &LogitVector, mask: &[bool], temperature: f64) -> Result<Vec<f64>, DecodeError> {
    if calibrated.len() != mask.len() {
        return Err(DecodeError::LengthMismatch {
            left: calibrated.len(),
            right: mask.len(),
        });
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(DecodeError::InvalidParameter(format!("temperature must be > 0, got {temperature}")));
    }
    if !mask.iter().any(|&m| m) {
        return Err(DecodeError::EmptyCandidateSet);
    }
    let scaled: Vec<f64> = calibrated
        .values()
        .iter()
        .zip(mask)
        .map(|(&v, &keep)| if keep { v / temperature } else { f64::NEG_INFINITY })
        .collect();
    let mut dist = softmax(&scaled);
    let total: f64 = dist.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(DecodeError::DegenerateDistribution("masked softmax has no finite mass".into()));
    }
    for p in &mut dist {
        *p /= total;
    }
    Ok(dist)
}

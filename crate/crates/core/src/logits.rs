use serde::{Deserialize, Serialize};

/// Vocabulary-indexed logits.
///
/// Backends hand logits over as `f32` (that is what crosses the wire and what
/// traces store); all arithmetic happens in `f64` on the widened values so a
/// stored trace reproduces the exact same numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn from_f32(values: &[f32]) -> Self {
        Self(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Narrows to `f32`. Lossless for vectors built with [`LogitVector::from_f32`].
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, token: u32) -> Option<f64> {
        self.0.get(token as usize).copied()
    }

    /// `logit(a) - logit(b)`.
    pub fn margin(&self, a: u32, b: u32) -> f64 {
        self.0[a as usize] - self.0[b as usize]
    }
}

impl From<Vec<f64>> for LogitVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Numerically stable softmax over finite entries; `-inf` entries get 0.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_handles_neg_infinity() {
        let p = softmax(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert_eq!(p, vec![0.5, 0.0, 0.5]);
        assert_eq!(softmax(&[f64::NEG_INFINITY]), vec![0.0]);
    }

    #[test]
    fn f32_roundtrip_is_lossless() {
        let raw = [0.1f32, -3.25, 1e-7, 123456.78];
        assert_eq!(LogitVector::from_f32(&raw).to_f32(), raw.to_vec());
    }
}

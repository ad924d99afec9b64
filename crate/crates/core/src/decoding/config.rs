use serde::{Deserialize, Serialize};

use super::{DecodeError, SamplingMode};

/// Which negative view feeds the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeViewKind {
    #[default]
    Shuffle,
    Noise,
    None,
}

impl std::str::FromStr for NegativeViewKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shuffle" => Ok(Self::Shuffle),
            "noise" => Ok(Self::Noise),
            "none" => Ok(Self::None),
            other => Err(format!("unknown negative view `{other}` (expected shuffle|noise|none)")),
        }
    }
}

/// Decoding hyper-parameters. Defaults are the reference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    /// Contrast weight.
    pub alpha: f64,
    /// Plausibility threshold relative to the top original-view probability.
    pub beta: f64,
    /// Image-attention boost passed to the backend.
    pub gamma: f64,
    /// Apply `gamma` to the negative view as well as the original.
    pub boost_negative_view: bool,
    pub mode: SamplingMode,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: usize,
    /// Sampling RNG seed.
    pub seed: u64,
    pub shuffle_size: usize,
    pub shuffle_seed: u64,
    pub negative_view: NegativeViewKind,
    /// Std-dev of the noise view, in intensity units.
    pub noise_sigma: f64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.1,
            gamma: 0.6,
            boost_negative_view: true,
            mode: SamplingMode::Nucleus,
            temperature: 1.0,
            top_p: 0.9,
            max_new_tokens: 512,
            seed: 0,
            shuffle_size: 14,
            shuffle_seed: 0,
            negative_view: NegativeViewKind::Shuffle,
            noise_sigma: 64.0,
        }
    }
}

impl DecodingConfig {
    pub fn greedy() -> Self {
        Self {
            mode: SamplingMode::Greedy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let fail = |m: String| Err(DecodeError::Config(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return fail(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if self.max_new_tokens == 0 {
            return fail("max_new_tokens must be >= 1".into());
        }
        if self.shuffle_size == 0 {
            return fail("shuffle_size must be >= 1".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    pub fn negative_boost(&self) -> f64 {
        if self.boost_negative_view {
            self.gamma
        } else {
            0.0
        }
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DecodeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Greedy,
    #[default]
    Nucleus,
}

impl std::str::FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "nucleus" => Ok(Self::Nucleus),
            other => Err(format!("unknown sampling mode `{other}` (expected greedy|nucleus)")),
        }
    }
}

const MASS_TOLERANCE: f64 = 1e-9;

fn check_distribution(dist: &[f64]) -> Result<(), DecodeError> {
    if dist.is_empty() {
        return Err(DecodeError::DegenerateDistribution("empty distribution".into()));
    }
    if let Some((i, p)) = dist.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(DecodeError::DegenerateDistribution(format!("token {i} has mass {p}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(DecodeError::DegenerateDistribution(format!("mass sums to {total}")));
    }
    Ok(())
}

pub const NUCLEUS_SLACK: f64 = 1e-12;

/// Lowest-id argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Tokens forming the smallest probability-sorted prefix holding at least
/// `top_p` of the mass, with [`NUCLEUS_SLACK`] absorbing summation rounding.
/// Zero-mass tokens never enter the nucleus.
pub fn nucleus(dist: &[f64], top_p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    // Stable sort keeps lower ids first among equal masses.
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
    let mut cumulative = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumulative += dist[i];
        if cumulative >= top_p - NUCLEUS_SLACK {
            order.truncate(k + 1);
            break;
        }
    }
    order
}

/// Draws one token. Greedy consumes no randomness; nucleus consumes exactly
/// one uniform draw.
pub fn sample_token<R: Rng + ?Sized>(dist: &[f64], mode: SamplingMode, top_p: f64, rng: &mut R) -> Result<u32, DecodeError> {
    check_distribution(dist)?;
    match mode {
        SamplingMode::Greedy => Ok(argmax(dist) as u32),
        SamplingMode::Nucleus => {
            if !(top_p > 0.0 && top_p <= 1.0) {
                return Err(DecodeError::InvalidParameter(format!("top_p must lie in (0, 1], got {top_p}")));
            }
            let kept = nucleus(dist, top_p);
            let mass: f64 = kept.iter().map(|&i| dist[i]).sum();
            let target = rng.random::<f64>() * mass;
            let mut cumulative = 0.0;
            for &i in &kept {
                cumulative += dist[i];
                if target < cumulative {
                    return Ok(i as u32);
                }
            }
            Ok(*kept.last().expect("a valid distribution has positive mass") as u32)
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn greedy_picks_argmax_lowest_id_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_token(&[0.1, 0.7, 0.2], SamplingMode::Greedy, 0.9, &mut rng).unwrap(), 1);
        assert_eq!(sample_token(&[0.4, 0.2, 0.4], SamplingMode::Greedy, 0.9, &mut rng).unwrap(), 0);
    }

    #[test]
    fn nucleus_cutoff() {
        assert_eq!(nucleus(&[0.6, 0.3, 0.1], 0.5), vec![0]);
        assert_eq!(nucleus(&[0.3, 0.6, 0.1], 0.9), vec![1, 0]);
        assert_eq!(nucleus(&[0.3, 0.6, 0.1, 0.0], 1.0), vec![1, 0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(sample_token(&[0.6, 0.3, 0.1], SamplingMode::Nucleus, 0.5, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn full_nucleus_matches_distribution() {
        let dist = [0.5, 0.2, 0.15, 0.1, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_token(&dist, SamplingMode::Nucleus, 1.0, &mut rng).unwrap() as usize] += 1;
        }
        for (c, p) in counts.iter().zip(dist) {
            let freq = *c as f64 / draws as f64;
            assert!((freq - p).abs() <= 0.01, "{freq} vs {p}");
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let dist = [0.25, 0.25, 0.25, 0.25];
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_token(&dist, SamplingMode::Nucleus, 0.9, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for bad in [vec![f64::NAN, 1.0], vec![-0.1, 1.1], vec![0.2, 0.2], vec![]] {
            assert!(matches!(
                sample_token(&bad, SamplingMode::Greedy, 0.9, &mut rng),
                Err(DecodeError::DegenerateDistribution(_))
            ));
        }
    }
}

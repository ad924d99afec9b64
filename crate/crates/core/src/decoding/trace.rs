//! Generation traces: a header record followed by one record per step,
//! serialized as JSON lines.
//!
//! Logits are stored as `float32`. In compact mode masks are run-length
//! encoded and distributions keep only their nonzero entries.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decode_step, DecodeError, DecodingConfig, NegativeViewKind};
use crate::backend::{BackendDescriptor, TokenId};
use crate::image::INTENSITY_REPR;
use crate::logits::LogitVector;
use crate::view::ShuffleSpec;

pub const TRACE_FORMAT: &str = "sdcd-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub intensity: String,
    pub config: DecodingConfig,
    pub negative_view: Option<NegativeViewKind>,
    pub shuffle: Option<ShuffleSpec>,
    pub prompt: Vec<TokenId>,
    pub backend: BackendDescriptor,
}

impl TraceHeader {
    pub fn new(
        config: DecodingConfig,
        negative_view: Option<NegativeViewKind>,
        shuffle: Option<ShuffleSpec>,
        prompt: Vec<TokenId>,
        backend: BackendDescriptor,
    ) -> Self {
        Self {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            intensity: INTENSITY_REPR.into(),
            config,
            negative_view,
            shuffle,
            prompt,
            backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub logits_v: Vec<f32>,
    /// Absent for single-view decoding.
    pub logits_vprime: Option<Vec<f32>>,
    pub mask: Vec<bool>,
    pub dist: Vec<f64>,
    pub token: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MaskRepr {
    Dense(Vec<bool>),
    /// `(value, run length)` pairs.
    Runs(Vec<(bool, usize)>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DistRepr {
    Dense(Vec<f64>),
    /// Vocabulary size plus `(token, probability)` for nonzero entries.
    Sparse { len: usize, entries: Vec<(usize, f64)> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(TraceHeader),
    Step {
        t: usize,
        logits_v: Vec<f32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logits_vprime: Option<Vec<f32>>,
        mask: MaskRepr,
        dist: DistRepr,
        token: TokenId,
    },
}

fn run_length(mask: &[bool]) -> Vec<(bool, usize)> {
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for &m in mask {
        match runs.last_mut() {
            Some((v, n)) if *v == m => *n += 1,
            _ => runs.push((m, 1)),
        }
    }
    runs
}

impl GenerationTrace {
    pub fn new(header: TraceHeader) -> Self {
        Self { header, steps: Vec::new() }
    }

    /// Every sampled token, including a final EOS.
    pub fn tokens(&self) -> Vec<TokenId> {
        self.steps.iter().map(|s| s.token).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W, compact: bool) -> Result<(), DecodeError> {
        let fail = |e: &dyn std::fmt::Display| DecodeError::TraceWriteFailure(e.to_string());
        let line = serde_json::to_string(&Record::Header(self.header.clone())).map_err(|e| fail(&e))?;
        writeln!(out, "{line}").map_err(|e| fail(&e))?;
        for s in &self.steps {
            let (mask, dist) = if compact {
                (
                    MaskRepr::Runs(run_length(&s.mask)),
                    DistRepr::Sparse {
                        len: s.dist.len(),
                        entries: s.dist.iter().copied().enumerate().filter(|(_, p)| *p != 0.0).collect(),
                    },
                )
            } else {
                (MaskRepr::Dense(s.mask.clone()), DistRepr::Dense(s.dist.clone()))
            };
            let record = Record::Step {
                t: s.t,
                logits_v: s.logits_v.clone(),
                logits_vprime: s.logits_vprime.clone(),
                mask,
                dist,
                token: s.token,
            };
            let line = serde_json::to_string(&record).map_err(|e| fail(&e))?;
            writeln!(out, "{line}").map_err(|e| fail(&e))?;
        }
        out.flush().map_err(|e| fail(&e))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, compact: bool) -> Result<(), DecodeError> {
        let file = std::fs::File::create(path).map_err(|e| DecodeError::TraceWriteFailure(e.to_string()))?;
        self.write_jsonl(std::io::BufWriter::new(file), compact)
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, DecodeError> {
        let mut header = None;
        let mut steps = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| DecodeError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| DecodeError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
            match record {
                Record::Header(h) if header.is_none() && n == 0 => header = Some(h),
                Record::Header(_) => {
                    return Err(DecodeError::MalformedTrace(format!("line {}: unexpected header", n + 1)))
                }
                Record::Step {
                    t,
                    logits_v,
                    logits_vprime,
                    mask,
                    dist,
                    token,
                } => {
                    if header.is_none() {
                        return Err(DecodeError::MalformedTrace("trace does not start with a header".into()));
                    }
                    let mask = match mask {
                        MaskRepr::Dense(m) => m,
                        MaskRepr::Runs(runs) => runs.into_iter().flat_map(|(v, k)| std::iter::repeat_n(v, k)).collect(),
                    };
                    let dist = match dist {
                        DistRepr::Dense(d) => d,
                        DistRepr::Sparse { len, entries } => {
                            let mut d = vec![0.0; len];
                            for (i, p) in entries {
                                *d.get_mut(i).ok_or_else(|| {
                                    DecodeError::MalformedTrace(format!("line {}: token {i} out of range", n + 1))
                                })? = p;
                            }
                            d
                        }
                    };
                    steps.push(TraceStep {
                        t,
                        logits_v,
                        logits_vprime,
                        mask,
                        dist,
                        token,
                    });
                }
            }
        }
        let header = header.ok_or_else(|| DecodeError::MalformedTrace("empty trace".into()))?;
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(DecodeError::MalformedTrace(format!(
                "unsupported trace format {} v{}",
                header.format, header.version
            )));
        }
        Ok(Self { header, steps })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DecodeError> {
        let file = std::fs::File::open(path).map_err(|e| DecodeError::MalformedTrace(e.to_string()))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    /// Per-step distribution invariants: unit mass within 1e-9 and nothing
    /// outside the mask.
    pub fn check_invariants(&self) -> Result<(), DecodeError> {
        for s in &self.steps {
            let total: f64 = s.dist.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(DecodeError::MalformedTrace(format!("step {}: mass {total}", s.t)));
            }
            if s.dist.iter().zip(&s.mask).any(|(&p, &m)| !m && p != 0.0) {
                return Err(DecodeError::MalformedTrace(format!("step {}: mass outside the mask", s.t)));
            }
        }
        Ok(())
    }

    /// Re-derives every step from the stored logits and the header's seed and
    /// checks it against the stored mask, distribution and token.
    pub fn replay(&self) -> Result<Vec<TokenId>, DecodeError> {
        let config = &self.header.config;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tokens = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let original = LogitVector::from_f32(&s.logits_v);
            let negative = s.logits_vprime.as_deref().map(LogitVector::from_f32);
            let step = decode_step(&original, negative.as_ref(), config, &mut rng)?;
            let mismatch = |detail: &str| DecodeError::ReplayMismatch {
                step: s.t,
                detail: detail.into(),
            };
            if step.mask != s.mask {
                return Err(mismatch("mask differs"));
            }
            if step.distribution != s.dist {
                return Err(mismatch("distribution differs"));
            }
            if step.token != s.token {
                return Err(mismatch(&format!("sampled {} but trace has {}", step.token, s.token)));
            }
            tokens.push(step.token);
        }
        Ok(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_length_encoding() {
        assert_eq!(
            run_length(&[true, true, false, true, false, false]),
            vec![(true, 2), (false, 1), (true, 1), (false, 2)]
        );
        assert!(run_length(&[]).is_empty());
    }

    #[test]
    fn rejects_headerless_and_foreign_traces() {
        let step = r#"{"record":"step","t":0,"logits_v":[0.0],"mask":{"dense":[true]},"dist":{"dense":[1.0]},"token":0}"#;
        assert!(GenerationTrace::read_jsonl(step.as_bytes()).is_err());
        assert!(GenerationTrace::read_jsonl("".as_bytes()).is_err());
        assert!(GenerationTrace::read_jsonl("{not json".as_bytes()).is_err());
    }
}

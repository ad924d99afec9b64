//! Structure sensitivity: how the YES-NO margin of a binary probe moves when
//! the image is patch-shuffled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, EvalCase};
use crate::backend::{LogitBackend, TokenId, ViewLabel};
use crate::image::ImageGrid;
use crate::prompt::binary_probe;
use crate::view::{preprocess_to_grid, shuffle_patches, ResizePolicy, ShuffleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdRecord {
    pub id: String,
    pub ground_truth: bool,
    /// YES minus NO logit under the original view.
    pub m_v: f64,
    /// The same under the shuffled view.
    pub m_vprime: f64,
    /// `m_vprime - m_v`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdAggregate {
    pub n_yes: usize,
    pub n_no: usize,
    /// Mean delta over present-object items; `None` without any.
    pub mean_delta_yes: Option<f64>,
    pub mean_delta_no: Option<f64>,
    /// `mean_delta_no - mean_delta_yes` when both classes are present.
    pub divergence: Option<f64>,
}

impl SsdAggregate {
    pub fn from_records(records: &[SsdRecord]) -> Self {
        let mean = |gt: bool| {
            let deltas: Vec<f64> = records.iter().filter(|r| r.ground_truth == gt).map(|r| r.delta).collect();
            (deltas.len(), (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64))
        };
        let (n_yes, mean_delta_yes) = mean(true);
        let (n_no, mean_delta_no) = mean(false);
        Self {
            n_yes,
            n_no,
            mean_delta_yes,
            mean_delta_no,
            divergence: mean_delta_no.zip(mean_delta_yes).map(|(no, yes)| no - yes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdReport {
    pub shuffle_size: usize,
    pub seed: u64,
    pub gamma: f64,
    pub records: Vec<SsdRecord>,
    pub aggregate: SsdAggregate,
}

/// Tokenized probe question for `object`.
pub fn probe_prompt(backend: &dyn LogitBackend, object: &str) -> Result<Vec<TokenId>, AnalysisError> {
    Ok(backend.tokenize(&binary_probe(object))?)
}

fn probe_margin(backend: &dyn LogitBackend, image: &ImageGrid, label: ViewLabel, gamma: f64, prompt: &[TokenId]) -> Result<f64, AnalysisError> {
    let handle = backend.encode_view(image, label, gamma)?;
    let logits = backend.next_token_logits(&handle, prompt);
    backend.release_view(&handle);
    let d = backend.descriptor();
    Ok(logits?.margin(d.yes_id, d.no_id))
}

fn probe_case(case: &EvalCase, shuffle_size: usize, seed: u64, gamma: f64) -> Result<SsdRecord, AnalysisError> {
    let backend = case.backend.as_ref();
    let image = preprocess_to_grid(&case.image, shuffle_size, ResizePolicy::Crop)?;
    let spec = ShuffleSpec::for_image(&image, shuffle_size, seed)?;
    let shuffled = shuffle_patches(&image, &spec)?;
    let prompt = probe_prompt(backend, &case.object)?;
    let m_v = probe_margin(backend, &image, ViewLabel::Original, gamma, &prompt)?;
    let m_vprime = probe_margin(backend, &shuffled, ViewLabel::Shuffled, gamma, &prompt)?;
    Ok(SsdRecord {
        id: case.id.clone(),
        ground_truth: case.ground_truth,
        m_v,
        m_vprime,
        delta: m_vprime - m_v,
    })
}

/// Probes every case under the original and the shuffled view with the same
/// prompt and boost. Records come back in input order.
pub fn ssd_probe(cases: &[EvalCase], shuffle_size: usize, seed: u64, gamma: f64) -> Result<SsdReport, AnalysisError> {
    if cases.is_empty() {
        return Err(AnalysisError::EmptyInput("ssd probe needs at least one item".into()));
    }
    let records = cases
        .par_iter()
        .map(|c| probe_case(c, shuffle_size, seed, gamma))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SsdReport {
        shuffle_size,
        seed,
        gamma,
        aggregate: SsdAggregate::from_records(&records),
        records,
    })
}

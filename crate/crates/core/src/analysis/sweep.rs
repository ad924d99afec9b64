//! Alpha and shuffle-size sweeps over binary probe items.
//!
//! Cells run in parallel and are merged in grid order. A failing cell is
//! reported in place; the other cells still complete.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ssd::probe_prompt;
use super::{AnalysisError, EvalCase};
use crate::backend::{LogitBackend, TokenId};
use crate::decoding::{build_views, generate_with_views, DecodingConfig, NegativeViewKind, Views};
use crate::metrics::pope::{pope_score_stratified, Confusion};
use crate::metrics::{parse_binary_answer, Answer, PopeItem, PopeScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Alpha,
    ShuffleSize,
}

impl SweepKind {
    pub fn param_name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::ShuffleSize => "S",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// YES rate on absent-object items.
    pub yes_rate_absent: f64,
    pub counts: Confusion,
}

impl From<&PopeScore> for SweepRow {
    fn from(s: &PopeScore) -> Self {
        Self {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            accuracy: s.accuracy,
            yes_rate_absent: s.yes_rate_absent,
            counts: s.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub param: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub config: DecodingConfig,
    pub items: usize,
    /// Single-view decoding with the same config.
    pub baseline: SweepRow,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// First token decides when it is YES or NO; otherwise the decoded text is
/// parsed if the backend can detokenize.
pub fn answer_from_tokens(backend: &dyn LogitBackend, tokens: &[TokenId]) -> Answer {
    let d = backend.descriptor();
    match tokens.first() {
        Some(&t) if t == d.yes_id => Answer::Yes,
        Some(&t) if t == d.no_id => Answer::No,
        _ => backend
            .detokenize(tokens)
            .map(|text| parse_binary_answer(&text))
            .unwrap_or(Answer::Unparseable),
    }
}

fn answer_case(case: &EvalCase, views: &Views, config: &DecodingConfig) -> Result<Answer, AnalysisError> {
    let backend = case.backend.as_ref();
    let prompt = probe_prompt(backend, &case.object)?;
    let generation = generate_with_views(backend, views, &prompt, config)?;
    Ok(answer_from_tokens(backend, &generation.tokens))
}

fn score(cases: &[EvalCase], answers: Vec<Answer>) -> Result<SweepRow, AnalysisError> {
    let items: Vec<PopeItem> = cases
        .iter()
        .map(|c| PopeItem {
            id: c.id.clone(),
            image: String::new(),
            object: c.object.clone(),
            ground_truth: c.ground_truth,
            stratum: c.stratum,
        })
        .collect();
    let scored = pope_score_stratified(items.iter().zip(answers))?;
    Ok(SweepRow::from(&scored.overall))
}

/// Answers every case on pre-built views and scores the lot.
pub fn evaluate_cases(cases: &[EvalCase], views: &[Views], config: &DecodingConfig) -> Result<SweepRow, AnalysisError> {
    let answers = cases
        .par_iter()
        .zip(views.par_iter())
        .map(|(c, v)| answer_case(c, v, config))
        .collect::<Result<Vec<_>, _>>()?;
    score(cases, answers)
}

fn original_views(cases: &[EvalCase]) -> Vec<Views> {
    cases.iter().map(|c| Views::original_only(c.image.clone())).collect()
}

fn build_all(cases: &[EvalCase], config: &DecodingConfig) -> Result<Vec<Views>, AnalysisError> {
    cases
        .par_iter()
        .map(|c| Ok(build_views(&c.image, config)?))
        .collect()
}

fn baseline(cases: &[EvalCase], config: &DecodingConfig) -> Result<SweepRow, AnalysisError> {
    let regular = DecodingConfig {
        negative_view: NegativeViewKind::None,
        ..config.clone()
    };
    evaluate_cases(cases, &original_views(cases), &regular)
}

fn check_inputs(cases: &[EvalCase], grid: &[f64], config: &DecodingConfig) -> Result<(), AnalysisError> {
    if cases.is_empty() {
        return Err(AnalysisError::EmptyInput("sweep needs at least one item".into()));
    }
    if grid.is_empty() {
        return Err(AnalysisError::InvalidGrid("grid is empty".into()));
    }
    config.validate()?;
    Ok(())
}

fn cell(param: f64, result: Result<SweepRow, AnalysisError>) -> SweepCell {
    match result {
        Ok(row) => SweepCell {
            param,
            row: Some(row),
            error: None,
        },
        Err(e) => SweepCell {
            param,
            row: None,
            error: Some(e.to_string()),
        },
    }
}

/// One shuffled view per case, built once from `config` and shared by every
/// alpha.
pub fn alpha_sweep(cases: &[EvalCase], alphas: &[f64], config: &DecodingConfig) -> Result<SweepReport, AnalysisError> {
    check_inputs(cases, alphas, config)?;
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(AnalysisError::InvalidGrid(format!("alpha must be finite and >= 0, got {a}")));
    }
    let views = build_all(cases, config)?;
    let baseline = baseline(cases, config)?;
    let cells = alphas
        .par_iter()
        .map(|&alpha| {
            let config = DecodingConfig { alpha, ..config.clone() };
            cell(alpha, evaluate_cases(cases, &views, &config))
        })
        .collect();
    Ok(SweepReport {
        kind: SweepKind::Alpha,
        config: config.clone(),
        items: cases.len(),
        baseline,
        cells,
    })
}

/// The permutation is regenerated per S from `config.shuffle_seed`.
pub fn shuffle_size_sweep(cases: &[EvalCase], sizes: &[usize], config: &DecodingConfig) -> Result<SweepReport, AnalysisError> {
    let grid: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    check_inputs(cases, &grid, config)?;
    let baseline = baseline(cases, config)?;
    let cells = sizes
        .par_iter()
        .map(|&shuffle_size| {
            let config = DecodingConfig {
                shuffle_size,
                negative_view: NegativeViewKind::Shuffle,
                ..config.clone()
            };
            let result = config
                .validate()
                .map_err(AnalysisError::from)
                .and_then(|_| build_all(cases, &config))
                .and_then(|views| evaluate_cases(cases, &views, &config));
            cell(shuffle_size as f64, result)
        })
        .collect();
    Ok(SweepReport {
        kind: SweepKind::ShuffleSize,
        config: config.clone(),
        items: cases.len(),
        baseline,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{DatasetConfig, SyntheticDataset};

    fn cases() -> Vec<EvalCase> {
        SyntheticDataset::generate(DatasetConfig {
            scenes: 6,
            ..DatasetConfig::default()
        })
        .unwrap()
        .cases()
        .unwrap()
    }

    #[test]
    fn alpha_zero_is_the_baseline() {
        let report = alpha_sweep(&cases(), &[0.0, 2.0], &DecodingConfig::greedy()).unwrap();
        assert_eq!(report.cells[0].row.as_ref(), Some(&report.baseline));
        let strong = report.cells[1].row.as_ref().unwrap();
        assert!(strong.yes_rate_absent < report.baseline.yes_rate_absent);
    }

    #[test]
    fn bad_size_fails_only_its_cell() {
        let report = shuffle_size_sweep(&cases(), &[14, 30, 224], &DecodingConfig::greedy()).unwrap();
        assert_eq!(report.failed_cells(), 1);
        assert!(report.cells[1].error.as_ref().unwrap().contains("NonDivisibleDimensions"));
        assert_eq!(report.cells[2].row.as_ref(), Some(&report.baseline));
    }

    #[test]
    fn rejects_empty_and_negative_grids() {
        let c = cases();
        assert!(alpha_sweep(&c, &[], &DecodingConfig::greedy()).is_err());
        assert!(alpha_sweep(&c, &[-1.0], &DecodingConfig::greedy()).is_err());
        assert!(alpha_sweep(&[], &[1.0], &DecodingConfig::greedy()).is_err());
    }
}

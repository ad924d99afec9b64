//! Text tables and JSON-lines records for probe and sweep outputs.
//!
//! Reference rows are printed beneath sweep tables as context. They come from
//! a 7B LVLM evaluated on POPE COCO (random split) and are never compared
//! against anything computed here.

use std::fmt::Write as _;

use serde::Serialize;

use super::bop::BopCurve;
use super::ssd::SsdReport;
use super::sweep::{SweepKind, SweepReport, SweepRow};

/// `(param, precision, recall, f1, accuracy)` in percent.
pub type ReferenceRow = (f64, f64, f64, f64, f64);

pub const ALPHA_REFERENCE: &[ReferenceRow] = &[
    (0.0, 94.74, 73.27, 82.63, 84.60),
    (0.4, 94.55, 75.20, 83.77, 85.43),
    (0.8, 93.54, 76.20, 83.98, 85.47),
    (1.2, 93.50, 76.67, 84.25, 85.67),
    (1.6, 93.00, 77.00, 84.25, 85.60),
    (2.0, 92.68, 77.67, 84.51, 85.77),
];

pub const SHUFFLE_SIZE_REFERENCE: &[ReferenceRow] = &[
    (14.0, 93.46, 77.20, 84.56, 85.90),
    (28.0, 93.04, 73.07, 81.85, 83.80),
    (56.0, 93.23, 70.73, 80.44, 82.80),
];

pub const REFERENCE_NOTE: &str = "reference values reported for a 7B LVLM on POPE COCO random (context only, not asserted)";

pub fn reference_rows(kind: SweepKind) -> &'static [ReferenceRow] {
    match kind {
        SweepKind::Alpha => ALPHA_REFERENCE,
        SweepKind::ShuffleSize => SHUFFLE_SIZE_REFERENCE,
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn row_line(out: &mut String, label: &str, row: &SweepRow) {
    let c = &row.counts;
    let _ = writeln!(
        out,
        "{:<10} {:>9} {:>7} {:>7} {:>8} {:>8} {:>4} {:>4} {:>4} {:>4}",
        label,
        pct(row.precision),
        pct(row.recall),
        pct(row.f1),
        pct(row.accuracy),
        pct(row.yes_rate_absent),
        c.tp,
        c.fp,
        c.fn_,
        c.tn
    );
}

pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>9} {:>7} {:>7} {:>8} {:>8} {:>4} {:>4} {:>4} {:>4}",
        report.kind.param_name(),
        "precision",
        "recall",
        "f1",
        "accuracy",
        "yes|absent",
        "tp",
        "fp",
        "fn",
        "tn"
    );
    row_line(&mut out, "regular", &report.baseline);
    for cell in &report.cells {
        let label = format_param(report.kind, cell.param);
        match (&cell.row, &cell.error) {
            (Some(row), _) => row_line(&mut out, &label, row),
            (None, Some(e)) => {
                let _ = writeln!(out, "{label:<10} error: {e}");
            }
            (None, None) => {}
        }
    }
    let _ = writeln!(out, "\n{REFERENCE_NOTE}:");
    for (p, prec, rec, f1, acc) in reference_rows(report.kind) {
        let _ = writeln!(
            out,
            "{:<10} {:>9.2} {:>7.2} {:>7.2} {:>8.2}",
            format_param(report.kind, *p),
            prec,
            rec,
            f1,
            acc
        );
    }
    out
}

fn format_param(kind: SweepKind, p: f64) -> String {
    match kind {
        SweepKind::Alpha => format!("{p:.1}"),
        SweepKind::ShuffleSize => format!("{p}"),
    }
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    kind: SweepKind,
    param: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<&'a SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Baseline first (`param: null`), then cells in grid order.
pub fn sweep_jsonl(report: &SweepReport) -> String {
    let mut records = vec![SweepRecord {
        kind: report.kind,
        param: None,
        row: Some(&report.baseline),
        error: None,
    }];
    records.extend(report.cells.iter().map(|c| SweepRecord {
        kind: report.kind,
        param: Some(c.param),
        row: c.row.as_ref(),
        error: c.error.as_deref(),
    }));
    to_jsonl(&records)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6}"))
}

pub fn ssd_summary(report: &SsdReport) -> String {
    let a = &report.aggregate;
    format!(
        "S={} seed={} gamma={}\nmean delta | present ({:>4} items): {}\nmean delta | absent  ({:>4} items): {}\ndivergence (absent - present):     {}\n",
        report.shuffle_size,
        report.seed,
        report.gamma,
        a.n_yes,
        opt(a.mean_delta_yes),
        a.n_no,
        opt(a.mean_delta_no),
        opt(a.divergence)
    )
}

pub fn bop_table(curve: &BopCurve) -> String {
    let mut out = format!("embedder: {}\n{:>6} {:>12} {:>7} {:>10}\n", curve.embedder, "S", "mean cosine", "pairs", "retention");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{:>6} {:>12.6} {:>7} {:>10}",
            p.shuffle_size,
            p.mean_cosine,
            p.pairs,
            p.retention.map_or_else(|| "-".into(), |r| format!("{r:.4}"))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::sweep::SweepCell;
    use crate::decoding::DecodingConfig;
    use crate::metrics::pope::Confusion;

    fn row() -> SweepRow {
        SweepRow {
            precision: 1.0,
            recall: 0.5,
            f1: 2.0 / 3.0,
            accuracy: 0.75,
            yes_rate_absent: 0.0,
            counts: Confusion {
                tp: 1,
                fn_: 1,
                tn: 2,
                ..Confusion::default()
            },
        }
    }

    #[test]
    fn table_lists_baseline_cells_and_reference() {
        let report = SweepReport {
            kind: SweepKind::ShuffleSize,
            config: DecodingConfig::default(),
            items: 4,
            baseline: row(),
            cells: vec![
                SweepCell {
                    param: 14.0,
                    row: Some(row()),
                    error: None,
                },
                SweepCell {
                    param: 30.0,
                    row: None,
                    error: Some("NonDivisibleDimensions".into()),
                },
            ],
        };
        let table = sweep_table(&report);
        assert!(table.contains("regular"));
        assert!(table.contains("30         error: NonDivisibleDimensions"));
        assert!(table.contains("84.56"));
        let lines = sweep_jsonl(&report);
        assert_eq!(lines.lines().count(), 3);
        assert!(lines.lines().next().unwrap().contains("\"param\":null"));
    }
}

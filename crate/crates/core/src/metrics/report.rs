use std::path::Path;

use super::{dice_score, hd95, MetricsError};
use crate::stats::mean;
use crate::volume::SegMask;

/// Metrics for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub id: String,
    pub dice: f64,
    /// `None` when either mask has no surface.
    pub hd95_mm: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalResult>,
    pub mean_dice: f64,
    /// Mean over records with a defined HD95.
    pub mean_hd95_mm: Option<f64>,
    pub undefined_hd95: usize,
}

pub const MEAN_ROW_ID: &str = "__mean__";
const HEADER: [&str; 6] = ["id", "dice", "hd95_mm", "tp", "fp", "fn"];

fn confusion(pred: &SegMask, truth: &SegMask) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (1, 1) => c.0 += 1,
            (1, 0) => c.1 += 1,
            (0, 1) => c.2 += 1,
            _ => {}
        }
    }
    c
}

/// Scores id-aligned `(id, mask)` pairs; records are matched by position.
pub fn evaluate_dataset(predictions: &[(&str, &SegMask)], references: &[(&str, &SegMask)]) -> Result<EvalReport, MetricsError> {
    if predictions.len() != references.len() {
        return Err(MetricsError::CountMismatch(predictions.len(), references.len()));
    }
    let mut rows = Vec::with_capacity(predictions.len());
    for (index, ((pid, pred), (rid, truth))) in predictions.iter().zip(references).enumerate() {
        if pid != rid {
            return Err(MetricsError::IdMismatch { index, prediction: pid.to_string(), reference: rid.to_string() });
        }
        let (tp, fp, fn_) = confusion(pred, truth);
        rows.push(EvalResult {
            id: pid.to_string(),
            dice: dice_score(pred, truth)?,
            hd95_mm: hd95(pred, truth)?,
            tp,
            fp,
            fn_,
        });
    }
    let dices: Vec<f64> = rows.iter().map(|r| r.dice).collect();
    let hds: Vec<f64> = rows.iter().filter_map(|r| r.hd95_mm).collect();
    Ok(EvalReport {
        mean_dice: mean(&dices).unwrap_or(f64::NAN),
        mean_hd95_mm: mean(&hds),
        undefined_hd95: rows.len() - hds.len(),
        rows,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

impl EvalReport {
    /// CSV text with one row per record followed by the `__mean__` row.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([r.id.clone(), fmt(r.dice), fmt_opt(r.hd95_mm), r.tp.to_string(), r.fp.to_string(), r.fn_.to_string()])?;
        }
        let avg = |f: fn(&EvalResult) -> usize| {
            let v: Vec<f64> = self.rows.iter().map(|r| f(r) as f64).collect();
            fmt_opt(mean(&v))
        };
        w.write_record([
            MEAN_ROW_ID.to_string(),
            fmt(self.mean_dice),
            fmt_opt(self.mean_hd95_mm),
            avg(|r| r.tp),
            avg(|r| r.fp),
            avg(|r| r.fn_),
        ])?;
        let bytes = w.into_inner().map_err(|e| MetricsError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), MetricsError> {
    std::fs::write(path, report.to_csv()?)?;
    Ok(())
}

/// Parses a report written by [`write_report_csv`]; the aggregate row is
/// recomputed from the per-record rows and checked against the file.
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<EvalReport, MetricsError> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != HEADER {
        return Err(MetricsError::Report("unexpected header".into()));
    }
    let bad = |m: String| MetricsError::Report(m);
    let mut rows = Vec::new();
    let mut mean_row = None;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != HEADER.len() {
            return Err(bad(format!("row has {} fields", rec.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        if &rec[0] == MEAN_ROW_ID {
            mean_row = Some((float(&rec[1])?, if rec[2].is_empty() { None } else { Some(float(&rec[2])?) }));
            continue;
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        rows.push(EvalResult {
            id: rec[0].to_string(),
            dice: float(&rec[1])?,
            hd95_mm: if rec[2].is_empty() { None } else { Some(float(&rec[2])?) },
            tp: int(&rec[3])?,
            fp: int(&rec[4])?,
            fn_: int(&rec[5])?,
        });
    }
    let (mean_dice, mean_hd95_mm) = mean_row.ok_or_else(|| bad("missing aggregate row".into()))?;
    let undefined_hd95 = rows.iter().filter(|r| r.hd95_mm.is_none()).count();
    Ok(EvalReport { rows, mean_dice, mean_hd95_mm, undefined_hd95 })
}

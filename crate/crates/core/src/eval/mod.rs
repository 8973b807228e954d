//! Multi-label evaluation: per-label and pooled F1, seed aggregation,
//! retrieval/generation error decomposition and report tables.

pub(crate) mod aggregate;
mod errors;
mod report;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{
    aggregate_runs, combined_std, mean, sample_std, summarize_seeds, RankingRow, RunObservation, SeedSummary,
    TaskSummary,
};
pub use errors::{error_decomposition, pearson, ConfusionPair, ErrorDecomposition, ErrorRecord};
pub use report::{
    read_observations, write_breakdown_csv, write_error_table_csv, write_observations_csv, write_ranking_csv,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} instances but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("invalid observation: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl LabelCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when undefined.
    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    fn add(&mut self, other: &LabelCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instances: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    /// In class-set order.
    pub per_label: Vec<LabelScore>,
}

impl MetricReport {
    pub fn label(&self, code: &str) -> Option<&LabelScore> {
        self.per_label.iter().find(|l| l.label == code)
    }
}

/// Per-label TP/FP/FN over `class_set`. Labels outside the class set are ignored.
pub fn confusion_counts<S: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<S>],
    class_set: &[String],
) -> Result<Vec<LabelCounts>, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut counts = vec![LabelCounts::default(); class_set.len()];
    for (g, p) in gold.iter().zip(pred) {
        let g: HashSet<&str> = g.iter().map(AsRef::as_ref).collect();
        let p: HashSet<&str> = p.iter().map(AsRef::as_ref).collect();
        for (c, label) in counts.iter_mut().zip(class_set) {
            match (g.contains(label.as_str()), p.contains(label.as_str())) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(counts)
}

/// Macro F1 is the unweighted mean over `class_set` (labels never seen score
/// 0); micro F1 comes from counts pooled over all labels.
pub fn f1_scores<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>], class_set: &[String]) -> Result<MetricReport, EvalError> {
    let counts = confusion_counts(gold, pred, class_set)?;
    Ok(report_from_counts(gold.len(), class_set, &counts))
}

pub fn report_from_counts(instances: usize, class_set: &[String], counts: &[LabelCounts]) -> MetricReport {
    let per_label: Vec<LabelScore> = class_set
        .iter()
        .zip(counts)
        .map(|(label, c)| LabelScore {
            label: label.clone(),
            counts: *c,
            support: c.support(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        })
        .collect();
    let mut pooled = LabelCounts::default();
    counts.iter().for_each(|c| pooled.add(c));
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|l| l.f1).sum::<f64>() / per_label.len() as f64
    };
    MetricReport {
        instances,
        macro_f1,
        micro_f1: pooled.f1(),
        micro_precision: pooled.precision(),
        micro_recall: pooled.recall(),
        per_label,
    }
}

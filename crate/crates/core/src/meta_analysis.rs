//! DerSimonian–Laird random-effects pooling of per-task scores, used to rank
//! retrieval configurations by stability as well as level.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{mean, RunObservation};

/// Lower bound on a task's within-task variance, so tasks whose seeds agree
/// exactly keep a finite weight.
pub const VARIANCE_FLOOR: f64 = 1e-12;
const Z95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("random effects need at least 2 tasks, got {0}")]
    TooFewTasks(usize),
    #[error("task '{task}' has {seeds} seed(s); at least 2 are needed for a within-task variance")]
    TooFewSeeds { task: String, seeds: usize },
    #[error("uneven task coverage, missing (config, task) cells: {}", format_cells(.0))]
    UnevenCoverage(Vec<(String, String)>),
    #[error("no observations")]
    Empty,
}

fn format_cells(cells: &[(String, String)]) -> String {
    cells.iter().map(|(c, t)| format!("({c}, {t})")).collect::<Vec<_>>().join(", ")
}

/// Pooled estimate for one metric of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffects {
    pub pooled_mean: f64,
    pub tau2: f64,
    pub q: f64,
    /// `sqrt(1 / sum of random-effects weights)`.
    pub se: f64,
    /// `pooled_mean ± 1.96 se`.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `pooled_mean ± 1.96 sqrt(tau2 + se^2)`.
    pub hetero_ci_low: f64,
    pub hetero_ci_high: f64,
    pub task_means: Vec<f64>,
    pub task_variances: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `sum(w y) / sum(w)` with `w = 1 / (sigma2 + tau2)`.
pub fn pooled_mean_with_tau2(means: &[f64], variances: &[f64], tau2: f64) -> f64 {
    let w: Vec<f64> = variances.iter().map(|v| 1.0 / (v + tau2)).collect();
    w.iter().zip(means).map(|(w, y)| w * y).sum::<f64>() / w.iter().sum::<f64>()
}

/// Random-effects estimate from per-task seed scores.
///
/// Each task contributes its seed mean `y_e` with variance of the mean
/// `s^2 / n` (floored at [`VARIANCE_FLOOR`]).
pub fn random_effects<S: AsRef<str>>(tasks: &[(S, Vec<f64>)]) -> Result<RandomEffects, MetaError> {
    if tasks.len() < 2 {
        return Err(MetaError::TooFewTasks(tasks.len()));
    }
    let mut y = Vec::with_capacity(tasks.len());
    let mut v = Vec::with_capacity(tasks.len());
    for (name, scores) in tasks {
        let n = scores.len();
        if n < 2 {
            return Err(MetaError::TooFewSeeds { task: name.as_ref().to_string(), seeds: n });
        }
        let m = mean(scores);
        let var = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        y.push(m);
        v.push((var / n as f64).max(VARIANCE_FLOOR));
    }
    Ok(dersimonian_laird(y, v))
}

/// The estimator itself, from task means and within-task variances.
pub fn dersimonian_laird(y: Vec<f64>, v: Vec<f64>) -> RandomEffects {
    let k = y.len() as f64;
    let w_fixed: Vec<f64> = v.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w_fixed.iter().sum();
    let y_fixed = w_fixed.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let q: f64 = w_fixed.iter().zip(&y).map(|(w, y)| w * (y - y_fixed).powi(2)).sum();
    // sum(w) - sum(w^2)/sum(w), written as sum_i w_i * (sum of the other
    // weights) / sum(w). The direct form cancels badly when one task sits at
    // the variance floor and its weight dwarfs the rest.
    let c = w_fixed
        .iter()
        .enumerate()
        .map(|(i, wi)| wi * w_fixed.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, wj)| wj).sum::<f64>())
        .sum::<f64>()
        / sw;
    let tau2 = if c > 0.0 { ((q - (k - 1.0)) / c).max(0.0) } else { 0.0 };
    let weights: Vec<f64> = v.iter().map(|v| 1.0 / (v + tau2)).collect();
    let sum_w: f64 = weights.iter().sum();
    let pooled_mean = weights.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sum_w;
    let se = (1.0 / sum_w).sqrt();
    let hetero = (tau2 + 1.0 / sum_w).sqrt();
    RandomEffects {
        pooled_mean,
        tau2,
        q,
        se,
        ci_low: pooled_mean - Z95 * se,
        ci_high: pooled_mean + Z95 * se,
        hetero_ci_low: pooled_mean - Z95 * hetero,
        hetero_ci_high: pooled_mean + Z95 * hetero,
        task_means: y,
        task_variances: v,
        weights,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub config_id: String,
    pub tasks: Vec<String>,
    #[serde(rename = "macro")]
    pub macro_f1: RandomEffects,
    #[serde(rename = "micro")]
    pub micro_f1: RandomEffects,
    /// RE macro-F1 plus RE micro-F1.
    pub composite: f64,
}

/// Pools every configuration and ranks by composite score, descending; ties
/// go to the lower macro tau², then the config id.
pub fn rank_configs(obs: &[RunObservation]) -> Result<Vec<MetaResult>, MetaError> {
    if obs.is_empty() {
        return Err(MetaError::Empty);
    }
    let grouped = crate::eval::aggregate::group_tasks(obs);
    let all_tasks: std::collections::BTreeSet<&str> = obs.iter().map(|o| o.task_id.as_str()).collect();
    let missing: Vec<(String, String)> = grouped
        .iter()
        .flat_map(|(config, tasks)| {
            all_tasks.iter().filter(|t| !tasks.contains_key(*t)).map(move |t| (config.to_string(), t.to_string()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(MetaError::UnevenCoverage(missing));
    }
    let mut results = Vec::with_capacity(grouped.len());
    for (config, tasks) in grouped {
        let per = |f: fn(&RunObservation) -> f64| -> Vec<(&str, Vec<f64>)> {
            tasks.iter().map(|(t, runs)| (*t, runs.iter().map(|r| f(r)).collect())).collect()
        };
        let macro_f1 = random_effects(&per(|r| r.macro_f1))?;
        let micro_f1 = random_effects(&per(|r| r.micro_f1))?;
        results.push(MetaResult {
            config_id: config.to_string(),
            tasks: tasks.keys().map(|t| t.to_string()).collect(),
            composite: macro_f1.pooled_mean + micro_f1.pooled_mean,
            macro_f1,
            micro_f1,
        });
    }
    rank_results(&mut results);
    Ok(results)
}

pub fn rank_results(results: &mut [MetaResult]) {
    results.sort_by(|a, b| {
        b.composite
            .partial_cmp(&a.composite)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.macro_f1.tau2.partial_cmp(&b.macro_f1.tau2).unwrap_or(Ordering::Equal))
            .then_with(|| a.config_id.cmp(&b.config_id))
    });
}

/// Table with RE means, both interval forms and tau² per metric.
pub fn write_meta_csv<W: Write>(results: &[MetaResult], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "config_id",
        "re_macro_f1",
        "macro_ci_low",
        "macro_ci_high",
        "re_micro_f1",
        "micro_ci_low",
        "micro_ci_high",
        "tau2_macro",
        "tau2_micro",
        "composite",
        "macro_hetero_ci_low",
        "macro_hetero_ci_high",
        "micro_hetero_ci_low",
        "micro_hetero_ci_high",
    ])?;
    let f = |x: f64| format!("{x:.4}");
    for (i, r) in results.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.config_id.clone(),
            f(r.macro_f1.pooled_mean),
            f(r.macro_f1.ci_low),
            f(r.macro_f1.ci_high),
            f(r.micro_f1.pooled_mean),
            f(r.micro_f1.ci_low),
            f(r.micro_f1.ci_high),
            f(r.macro_f1.tau2),
            f(r.micro_f1.tau2),
            f(r.composite),
            f(r.macro_f1.hetero_ci_low),
            f(r.macro_f1.hetero_ci_high),
            f(r.micro_f1.hetero_ci_low),
            f(r.micro_f1.hetero_ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

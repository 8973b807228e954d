use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricReport;

/// One evaluated run: a method/configuration on a task with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunObservation {
    #[serde(alias = "method", alias = "config")]
    pub config_id: String,
    #[serde(alias = "task")]
    pub task_id: String,
    pub seed: u64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `(1/n) * sqrt(sum of sigma^2)` over `n` per-task deviations.
pub fn combined_std(stds: &[f64]) -> f64 {
    if stds.is_empty() {
        0.0
    } else {
        stds.iter().map(|s| s * s).sum::<f64>().sqrt() / stds.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
}

pub fn summarize_seeds(runs: &[(u64, MetricReport)]) -> SeedSummary {
    let macros: Vec<f64> = runs.iter().map(|(_, r)| r.macro_f1).collect();
    let micros: Vec<f64> = runs.iter().map(|(_, r)| r.micro_f1).collect();
    SeedSummary {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        macro_mean: mean(&macros),
        macro_std: sample_std(&macros),
        micro_mean: mean(&micros),
        micro_std: sample_std(&micros),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub n_seeds: usize,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub method: String,
    /// Mean over tasks of the per-task macro-F1 seed means.
    pub mean_macro_f1: f64,
    pub combined_std: f64,
    pub tasks: Vec<TaskSummary>,
}

pub(crate) fn group_tasks(obs: &[RunObservation]) -> BTreeMap<&str, BTreeMap<&str, Vec<&RunObservation>>> {
    let mut by: BTreeMap<&str, BTreeMap<&str, Vec<&RunObservation>>> = BTreeMap::new();
    for o in obs {
        by.entry(&o.config_id).or_default().entry(&o.task_id).or_default().push(o);
    }
    by
}

/// Ranks methods by mean macro-F1 across tasks (descending, ties by name).
pub fn aggregate_runs(obs: &[RunObservation]) -> Vec<RankingRow> {
    let mut rows: Vec<RankingRow> = group_tasks(obs)
        .into_iter()
        .map(|(method, tasks)| {
            let tasks: Vec<TaskSummary> = tasks
                .into_iter()
                .map(|(task, runs)| {
                    let ma: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
                    let mi: Vec<f64> = runs.iter().map(|r| r.micro_f1).collect();
                    TaskSummary {
                        task: task.to_string(),
                        n_seeds: runs.len(),
                        macro_mean: mean(&ma),
                        macro_std: sample_std(&ma),
                        micro_mean: mean(&mi),
                        micro_std: sample_std(&mi),
                    }
                })
                .collect();
            let means: Vec<f64> = tasks.iter().map(|t| t.macro_mean).collect();
            let stds: Vec<f64> = tasks.iter().map(|t| t.macro_std).collect();
            RankingRow { method: method.to_string(), mean_macro_f1: mean(&means), combined_std: combined_std(&stds), tasks }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_macro_f1.partial_cmp(&a.mean_macro_f1).unwrap_or(Ordering::Equal).then_with(|| a.method.cmp(&b.method))
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(m: &str, t: &str, seed: u64, macro_f1: f64) -> RunObservation {
        RunObservation { config_id: m.into(), task_id: t.into(), seed, macro_f1, micro_f1: macro_f1 }
    }

    #[test]
    fn combined_std_analytic() {
        assert_eq!(combined_std(&[0.0, 0.0, 0.0]), 0.0);
        let v = combined_std(&[0.01, 0.01, 0.01]);
        assert!((v - (3e-4f64).sqrt() / 3.0).abs() < 1e-15);
        assert!((v - 0.00577).abs() < 1e-5);
    }

    #[test]
    fn sample_std_known_value() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[0.4]), 0.0);
    }

    #[test]
    fn ranking_sorted_by_mean() {
        let data = vec![
            obs("b", "dark", 1, 0.5),
            obs("b", "dark", 2, 0.7),
            obs("a", "dark", 1, 0.8),
            obs("a", "dark", 2, 0.8),
            obs("a", "gray", 1, 0.6),
            obs("b", "gray", 1, 0.6),
        ];
        let rows = aggregate_runs(&data);
        assert_eq!(rows[0].method, "a");
        assert!((rows[0].mean_macro_f1 - 0.7).abs() < 1e-12);
        assert_eq!(rows[0].combined_std, 0.0);
        let b_std = sample_std(&[0.5, 0.7]);
        assert!((rows[1].combined_std - b_std / 2.0).abs() < 1e-15);
    }

    #[test]
    fn observation_aliases() {
        let o: RunObservation =
            serde_json::from_str(r#"{"method":"svm","task":"dark","seed":1,"macro_f1":0.5,"micro_f1":0.6}"#).unwrap();
        assert_eq!(o.config_id, "svm");
    }
}

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{f1_scores, EvalError, LabelScore};

/// One classified instance together with the label sets of the examples
/// that were placed in its prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub retrieved_labels: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub gold: String,
    pub predicted: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub fn_total: u64,
    pub retrieval_errors: u64,
    pub generation_errors: u64,
    /// Generation over retrieval errors; absent when there are no retrieval errors.
    pub gen_ret_ratio: Option<f64>,
    /// Most frequent first.
    pub confusion_pairs: Vec<ConfusionPair>,
    /// Correlation of per-label support and F1 over labels with support > 0.
    pub support_f1_pearson_r: Option<f64>,
    pub per_label: Vec<LabelScore>,
}

/// Splits false negatives into retrieval errors (the gold label is in none of
/// the retrieved examples) and generation errors (it was retrieved but not
/// predicted). Confusion pairs are counted on instances that both miss a
/// gold label and add a wrong one.
pub fn error_decomposition(records: &[ErrorRecord], class_set: &[String]) -> Result<ErrorDecomposition, EvalError> {
    let in_set: HashSet<&str> = class_set.iter().map(String::as_str).collect();
    let position = |c: &str| class_set.iter().position(|x| x == c).unwrap_or(usize::MAX);
    let (mut retrieval, mut generation) = (0u64, 0u64);
    let mut pairs: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for r in records {
        let gold: HashSet<&str> = r.gold.iter().map(String::as_str).filter(|c| in_set.contains(c)).collect();
        let pred: HashSet<&str> = r.predicted.iter().map(String::as_str).filter(|c| in_set.contains(c)).collect();
        let retrieved: HashSet<&str> = r.retrieved_labels.iter().flatten().map(String::as_str).collect();
        let mut missed: Vec<&str> = gold.difference(&pred).copied().collect();
        let mut extra: Vec<&str> = pred.difference(&gold).copied().collect();
        for m in &missed {
            if retrieved.contains(m) {
                generation += 1;
            } else {
                retrieval += 1;
            }
        }
        if !missed.is_empty() && !extra.is_empty() {
            missed.sort_by_key(|c| position(c));
            extra.sort_by_key(|c| position(c));
            for g in &missed {
                for p in &extra {
                    *pairs.entry((position(g), position(p))).or_default() += 1;
                }
            }
        }
    }
    let mut confusion_pairs: Vec<ConfusionPair> = pairs
        .into_iter()
        .map(|((g, p), count)| ConfusionPair { gold: class_set[g].clone(), predicted: class_set[p].clone(), count })
        .collect();
    // Stable sort keeps class-set order among equal counts.
    confusion_pairs.sort_by(|a, b| b.count.cmp(&a.count));

    let gold: Vec<Vec<String>> = records.iter().map(|r| r.gold.clone()).collect();
    let pred: Vec<Vec<String>> = records.iter().map(|r| r.predicted.clone()).collect();
    let report = f1_scores(&gold, &pred, class_set)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        report.per_label.iter().filter(|l| l.support > 0).map(|l| (l.support as f64, l.f1)).unzip();

    Ok(ErrorDecomposition {
        fn_total: retrieval + generation,
        retrieval_errors: retrieval,
        generation_errors: generation,
        gen_ret_ratio: (retrieval > 0).then(|| generation as f64 / retrieval as f64),
        confusion_pairs,
        support_f1_pearson_r: pearson(&xs, &ys),
        per_label: report.per_label,
    })
}

/// Pearson correlation; `None` with fewer than two points or a constant series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn rec(gold: &[&str], pred: &[&str], retrieved: &[&[&str]]) -> ErrorRecord {
        ErrorRecord { gold: v(gold), predicted: v(pred), retrieved_labels: retrieved.iter().map(|r| v(r)).collect() }
    }

    #[test]
    fn retrieved_but_missed_is_generation_error() {
        let d = error_decomposition(&[rec(&["a"], &["b"], &[&["a"], &["b"]])], &v(&["a", "b"])).unwrap();
        assert_eq!((d.retrieval_errors, d.generation_errors), (0, 1));
        assert_eq!(d.gen_ret_ratio, None);
        assert_eq!(d.confusion_pairs, [ConfusionPair { gold: "a".into(), predicted: "b".into(), count: 1 }]);
    }

    #[test]
    fn absent_from_retrieval_is_retrieval_error() {
        let d = error_decomposition(&[rec(&["a", "b"], &[], &[&["c"]])], &v(&["a", "b", "c"])).unwrap();
        assert_eq!((d.fn_total, d.retrieval_errors), (2, 2));
        assert!(d.confusion_pairs.is_empty());
    }

    #[test]
    fn table_ratio() {
        let mut records = Vec::new();
        for _ in 0..10 {
            records.push(rec(&["a"], &[], &[&["b"]]));
        }
        for _ in 0..36 {
            records.push(rec(&["a"], &[], &[&["a"]]));
        }
        let d = error_decomposition(&records, &v(&["a", "b"])).unwrap();
        assert_eq!((d.fn_total, d.retrieval_errors, d.generation_errors), (46, 10, 36));
        assert!((d.gen_ret_ratio.unwrap() - 3.6).abs() < 1e-12);
    }

    #[test]
    fn pearson_line_and_degenerate() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[0.2, 0.4, 0.6]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
        assert_eq!(pearson(&[1.0, 2.0], &[0.5, 0.5]), None);
    }
}

use serde::Serialize;

use super::TaskExample;

/// Square label co-occurrence counts. `counts[a][a]` is the number of examples
/// carrying `a`; `counts[a][b]` the number carrying both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CooccurrenceMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<u64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.counts[i][j])
    }
}

/// Builds the co-occurrence matrix over `class_set` (row/column order follows it).
/// Labels outside `class_set` are ignored.
pub fn cooccurrence_matrix(dataset: &[TaskExample], class_set: &[String]) -> CooccurrenceMatrix {
    let n = class_set.len();
    let mut counts = vec![vec![0u64; n]; n];
    for ex in dataset {
        let mut idx: Vec<usize> = ex
            .target
            .iter()
            .filter_map(|l| class_set.iter().position(|c| c == l))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        for &i in &idx {
            for &j in &idx {
                counts[i][j] += 1;
            }
        }
    }
    CooccurrenceMatrix { labels: class_set.to_vec(), counts }
}

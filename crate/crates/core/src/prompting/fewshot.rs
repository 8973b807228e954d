use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PromptError, PromptExample};
use crate::corpus::{TaskExample, TaskSpec};

/// Indices picked from a length-sorted list of `n` candidates.
pub fn spaced_indices(n: usize, k: usize) -> Vec<usize> {
    match k {
        0 => Vec::new(),
        1 => vec![(n - 1) / 2],
        _ => (0..k).map(|i| i * (n - 1) / (k - 1)).collect(),
    }
}

/// Static few-shot support set: `k` length-spaced examples per class,
/// concatenated in class order and then shuffled with `seed`.
///
/// A multi-label clause may be picked for more than one class.
pub fn build_fewshot(
    pool: &[TaskExample],
    task: &TaskSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<PromptExample>, PromptError> {
    let mut out = Vec::with_capacity(k * task.class_set.len());
    for class in &task.class_set {
        let mut candidates: Vec<&TaskExample> = pool.iter().filter(|e| e.target.contains(class)).collect();
        if candidates.len() < k {
            return Err(PromptError::NotEnoughExamples { class: class.clone(), needed: k, available: candidates.len() });
        }
        candidates.sort_by(|a, b| {
            a.text.chars().count().cmp(&b.text.chars().count()).then_with(|| a.clause_id.cmp(&b.clause_id))
        });
        for i in spaced_indices(candidates.len(), k) {
            let e = candidates[i];
            out.push(PromptExample { clause_id: e.clause_id.clone(), text: e.text.clone(), labels: e.target.clone() });
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}

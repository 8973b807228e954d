use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::llm::{LlmError, RerankProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedExample {
    pub clause_id: String,
    pub relevance: f64,
    /// 1-based.
    pub rank: usize,
}

/// Scores every `(id, text)` candidate against `query` and keeps the top `k`
/// by relevance, ties by id. `k` larger than the candidate list is clamped.
pub fn rerank(
    reranker: &dyn RerankProvider,
    query: &str,
    candidates: &[(&str, &str)],
    k: usize,
) -> Result<Vec<RerankedExample>, RetrievalError> {
    if candidates.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let texts: Vec<&str> = candidates.iter().map(|(_, t)| *t).collect();
    let scores = reranker.rerank_scores(query, &texts)?;
    if scores.len() != candidates.len() {
        return Err(LlmError::Protocol(format!(
            "reranker returned {} scores for {} candidates",
            scores.len(),
            candidates.len()
        ))
        .into());
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(LlmError::Protocol(format!("non-finite rerank score {bad}")).into());
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then_with(|| candidates[a].0.cmp(candidates[b].0))
    });
    Ok(order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, j)| RerankedExample { clause_id: candidates[j].0.to_string(), relevance: scores[j], rank: i + 1 })
        .collect())
}

/// Reranker-free fallback: the first `k` candidates in retrieval order, with
/// a synthetic relevance that decreases by rank.
pub fn retrieval_order(candidate_ids: &[&str], k: usize) -> Vec<RerankedExample> {
    let k = k.min(candidate_ids.len());
    candidate_ids
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| RerankedExample { clause_id: id.to_string(), relevance: (k - i) as f64 / k as f64, rank: i + 1 })
        .collect()
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Candidate, CandidateSource};

/// A merged candidate keeping the score from each source that found it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridCandidate {
    pub clause_id: String,
    pub dense_score: Option<f64>,
    pub sparse_score: Option<f64>,
}

impl HybridCandidate {
    fn from_candidate(c: &Candidate) -> Self {
        let mut h = Self { clause_id: c.clause_id.clone(), dense_score: None, sparse_score: None };
        h.set(c);
        h
    }

    fn set(&mut self, c: &Candidate) {
        match c.source {
            CandidateSource::Dense => self.dense_score = Some(c.score),
            CandidateSource::Sparse => self.sparse_score = Some(c.score),
        }
    }
}

/// Interleaves the two ranked lists (dense first at each rank), skipping ids
/// already emitted but recording their second score.
pub fn hybrid_merge(dense: &[Candidate], sparse: &[Candidate]) -> Vec<HybridCandidate> {
    let mut out: Vec<HybridCandidate> = Vec::with_capacity(dense.len() + sparse.len());
    let mut seen: HashMap<String, usize> = HashMap::new();
    for i in 0..dense.len().max(sparse.len()) {
        for c in [dense.get(i), sparse.get(i)].into_iter().flatten() {
            match seen.get(&c.clause_id) {
                Some(&pos) => out[pos].set(c),
                None => {
                    seen.insert(c.clause_id.clone(), out.len());
                    out.push(HybridCandidate::from_candidate(c));
                }
            }
        }
    }
    out
}

/// Wraps a dense-only list in the merged shape.
pub fn dense_only(dense: &[Candidate]) -> Vec<HybridCandidate> {
    dense.iter().map(HybridCandidate::from_candidate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str], source: CandidateSource) -> Vec<Candidate> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| Candidate { clause_id: id.to_string(), score: 1.0 / (i + 1) as f64, source })
            .collect()
    }

    #[test]
    fn disjoint_lists_interleave() {
        let m = hybrid_merge(&list(&["a", "b", "c"], CandidateSource::Dense), &list(&["x", "y", "z"], CandidateSource::Sparse));
        let ids: Vec<_> = m.iter().map(|h| h.clause_id.as_str()).collect();
        assert_eq!(ids, ["a", "x", "b", "y", "c", "z"]);
    }

    #[test]
    fn identical_lists_collapse() {
        let ids = ["a", "b", "c", "d"];
        let m = hybrid_merge(&list(&ids, CandidateSource::Dense), &list(&ids, CandidateSource::Sparse));
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|h| h.dense_score.is_some() && h.sparse_score.is_some()));
    }

    #[test]
    fn uneven_lengths() {
        let m = hybrid_merge(&list(&["a"], CandidateSource::Dense), &list(&["b", "a", "c"], CandidateSource::Sparse));
        let ids: Vec<_> = m.iter().map(|h| h.clause_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(m[0].sparse_score, Some(0.5));
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::dense::top_p;
use super::{Candidate, CandidateSource, RetrievalError};
use crate::text::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// BM25 inverted index. Postings are `(document position, term frequency)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub params: Bm25Params,
    ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl SparseIndex {
    pub fn build<S: AsRef<str>>(ids: Vec<String>, texts: &[S], params: Bm25Params) -> Result<Self, RetrievalError> {
        if ids.len() != texts.len() {
            return Err(RetrievalError::Format(format!("{} ids for {} texts", ids.len(), texts.len())));
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(texts.len());
        for (doc, text) in texts.iter().enumerate() {
            let toks = terms(text.as_ref());
            doc_lengths.push(toks.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((doc as u32, n));
            }
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Self { params, ids, doc_lengths, avgdl, postings })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_length(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Raw BM25 scores for every document that shares a term with the query.
    /// Each query token contributes, so repeated query terms weigh more.
    pub fn scores(&self, query: &str) -> HashMap<usize, f64> {
        let Bm25Params { k1, b } = self.params;
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let dl = f64::from(self.doc_lengths[doc as usize]);
                let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
                let s = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
                *acc.entry(doc as usize).or_default() += s;
            }
        }
        acc
    }

    pub fn search(&self, query: &str, p: usize) -> Vec<Candidate> {
        self.search_filtered(query, p, |_| true)
    }

    /// Top-`p` documents by BM25; zero scores are dropped, ties by id.
    pub fn search_filtered(&self, query: &str, p: usize, keep: impl Fn(usize) -> bool) -> Vec<Candidate> {
        let scored: Vec<(usize, f64)> =
            self.scores(query).into_iter().filter(|&(d, s)| s > 0.0 && keep(d)).collect();
        top_p(scored, p, &self.ids, CandidateSource::Sparse)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sparse index serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RetrievalError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:02}")).collect()
    }

    #[test]
    fn no_shared_term_gives_empty_list() {
        let idx = SparseIndex::build(ids(2), &["el usuario acepta", "la empresa puede"], Bm25Params::default()).unwrap();
        assert!(idx.search("xyz qwerty", 5).is_empty());
    }

    #[test]
    fn single_doc_self_query_is_positive() {
        let text = "la empresa podrá modificar estos términos";
        let idx = SparseIndex::build(ids(1), &[text], Bm25Params::default()).unwrap();
        let hits = idx.search(text, 5);
        assert_eq!(hits.len(), 1);
        assert!(hits[0].score > 0.0);
    }

    #[test]
    fn avgdl_is_mean_length() {
        let idx = SparseIndex::build(ids(3), &["a b", "a b c d", "e"], Bm25Params::default()).unwrap();
        assert!((idx.avgdl() - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(idx.document_frequency("a"), 2);
    }

    #[test]
    fn hand_computed_two_doc_score() {
        // N=2, df(gato)=1 -> idf = ln(1 + 1.5/1.5) = ln 2. dl=2, avgdl=2.
        let idx = SparseIndex::build(ids(2), &["gato negro", "perro blanco"], Bm25Params::default()).unwrap();
        let hits = idx.search("gato", 5);
        let expected = 2f64.ln() * 2.2 / (1.0 + 1.2);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_broken_by_id() {
        let idx = SparseIndex::build(vec!["b".into(), "a".into(), "c".into()], &["pago", "pago", "otro"], Bm25Params::default())
            .unwrap();
        let hits = idx.search("pago", 5);
        assert_eq!(hits.iter().map(|c| c.clause_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn json_round_trip() {
        let idx = SparseIndex::build(ids(2), &["uno dos", "dos tres"], Bm25Params::default()).unwrap();
        assert_eq!(SparseIndex::from_json(&idx.to_json()).unwrap(), idx);
    }
}

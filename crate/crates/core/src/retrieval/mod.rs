//! The annotated knowledge base: an exact dense vector store, a BM25 index,
//! hybrid candidate merging and reranked top-k selection.

mod dense;
mod hybrid;
mod rerank;
mod sparse;

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::DenseIndex;
pub use hybrid::{dense_only, hybrid_merge, HybridCandidate};
pub use rerank::{rerank, retrieval_order, RerankedExample};
pub use sparse::{Bm25Params, SparseIndex};

use crate::llm::{EmbeddingProvider, LlmError, RerankProvider};

pub const DEFAULT_CANDIDATES: usize = 15;
pub const DEFAULT_TOP_K: usize = 5;

/// Texts embedded per provider call while building.
const BUILD_BATCH: usize = 64;

pub const CLAUSES_FILE: &str = "clauses.jsonl";
pub const DENSE_FILE: &str = "dense.bin";
pub const SPARSE_FILE: &str = "sparse.json";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("knowledge base is empty")]
    EmptyIndex,
    #[error("duplicate clause id '{0}' in knowledge base")]
    DuplicateId(String),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid index data: {0}")]
    Format(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub clause_id: String,
    pub score: f64,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Dense,
    #[default]
    Hybrid,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Self::Dense),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("unknown retrieval mode '{other}' (expected dense|hybrid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub mode: RetrievalMode,
    /// Candidates per source (P).
    pub candidates: usize,
    /// Examples kept after reranking (k).
    pub top_k: usize,
    pub rerank: bool,
    /// On reranker failure, keep the first k merged candidates instead of failing.
    pub fallback_to_retrieval_order: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            mode: RetrievalMode::Hybrid,
            candidates: DEFAULT_CANDIDATES,
            top_k: DEFAULT_TOP_K,
            rerank: true,
            fallback_to_retrieval_order: false,
        }
    }
}

/// One annotated clause of the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl From<&crate::corpus::Clause> for KbEntry {
    fn from(c: &crate::corpus::Clause) -> Self {
        Self { id: c.id.clone(), text: c.text.clone(), labels: c.labels.clone() }
    }
}

/// Embeds every entry (in batches, checking that the dimension never changes)
/// and builds both indexes in entry order.
pub fn build_indexes(
    entries: &[KbEntry],
    embedder: &dyn EmbeddingProvider,
    params: Bm25Params,
) -> Result<(DenseIndex, SparseIndex), RetrievalError> {
    if entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(entries.len());
    let mut dim: Option<usize> = None;
    for batch in entries.chunks(BUILD_BATCH) {
        let texts: Vec<&str> = batch.iter().map(|e| e.text.as_str()).collect();
        let got = embedder.embed(&texts)?;
        if got.len() != texts.len() {
            return Err(LlmError::Protocol(format!("{} embeddings for {} texts", got.len(), texts.len())).into());
        }
        for v in &got {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(RetrievalError::Dimension { expected: d, got: v.len() }),
                _ => {}
            }
        }
        vectors.extend(got);
    }
    let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
    let texts: Vec<&str> = entries.iter().map(|e| e.text.as_str()).collect();
    let dense = DenseIndex::new(ids.clone(), vectors)?;
    let sparse = SparseIndex::build(ids, &texts, params)?;
    Ok((dense, sparse))
}

pub fn embed_query(embedder: &dyn EmbeddingProvider, query: &str) -> Result<Vec<f32>, RetrievalError> {
    let mut v = embedder.embed(&[query])?;
    if v.len() != 1 {
        return Err(LlmError::Protocol(format!("{} embeddings for 1 text", v.len())).into());
    }
    Ok(v.remove(0))
}

/// A retrieved example ready for prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub clause_id: String,
    pub text: String,
    pub labels: Vec<String>,
    pub relevance: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// Merged candidate list before reranking.
    pub candidates: Vec<HybridCandidate>,
    pub examples: Vec<RetrievedExample>,
    /// True when the reranker failed and retrieval order was used.
    pub fell_back: bool,
}

/// Clauses plus their dense and sparse indexes, aligned by position.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entries: Vec<KbEntry>,
    dense: DenseIndex,
    sparse: SparseIndex,
    positions: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn build(
        entries: Vec<KbEntry>,
        embedder: &dyn EmbeddingProvider,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let (dense, sparse) = build_indexes(&entries, embedder, params)?;
        Self::from_parts(entries, dense, sparse)
    }

    pub fn from_parts(entries: Vec<KbEntry>, dense: DenseIndex, sparse: SparseIndex) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let aligned = |ids: &[String]| ids.len() == entries.len() && ids.iter().zip(&entries).all(|(a, e)| *a == e.id);
        if !aligned(dense.ids()) || !aligned(sparse.ids()) {
            return Err(RetrievalError::Format("index ids do not match clause file".into()));
        }
        let mut positions = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if positions.insert(e.id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries, dense, sparse, positions })
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn entry(&self, id: &str) -> Option<&KbEntry> {
        self.positions.get(id).map(|&i| &self.entries[i])
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join(CLAUSES_FILE))?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join(DENSE_FILE))?);
        self.dense.write_to(&mut w)?;
        w.flush()?;
        fs::write(dir.join(SPARSE_FILE), self.sparse.to_json())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let dir = dir.as_ref();
        let mut entries = Vec::new();
        for line in BufReader::new(fs::File::open(dir.join(CLAUSES_FILE))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str(&line)?);
            }
        }
        let dense = DenseIndex::read_from(BufReader::new(fs::File::open(dir.join(DENSE_FILE))?))?;
        let sparse = SparseIndex::from_json(&fs::read_to_string(dir.join(SPARSE_FILE))?)?;
        Self::from_parts(entries, dense, sparse)
    }

    /// Retrieves, merges and reranks examples for `query`. `keep` restricts the
    /// search to a subset of the knowledge base (e.g. one label category).
    pub fn retrieve(
        &self,
        query: &str,
        embedder: &dyn EmbeddingProvider,
        reranker: Option<&dyn RerankProvider>,
        config: &RetrievalConfig,
        keep: Option<&dyn Fn(&KbEntry) -> bool>,
    ) -> Result<Retrieval, RetrievalError> {
        let qv = embed_query(embedder, query)?;
        self.retrieve_embedded(query, &qv, reranker, config, keep)
    }

    /// Like [`retrieve`](Self::retrieve) with the query vector already computed.
    pub fn retrieve_embedded(
        &self,
        query: &str,
        query_vector: &[f32],
        reranker: Option<&dyn RerankProvider>,
        config: &RetrievalConfig,
        keep: Option<&dyn Fn(&KbEntry) -> bool>,
    ) -> Result<Retrieval, RetrievalError> {
        let keep_pos = |i: usize| keep.map_or(true, |f| f(&self.entries[i]));
        let dense = self.dense.search_filtered(query_vector, config.candidates, keep_pos)?;
        let candidates = match config.mode {
            RetrievalMode::Dense => dense_only(&dense),
            RetrievalMode::Hybrid => {
                let sparse = self.sparse.search_filtered(query, config.candidates, keep_pos);
                hybrid_merge(&dense, &sparse)
            }
        };
        let ids: Vec<&str> = candidates.iter().map(|c| c.clause_id.as_str()).collect();
        let (ranked, fell_back) = match reranker.filter(|_| config.rerank) {
            None => (retrieval_order(&ids, config.top_k), false),
            Some(r) => {
                let pairs: Vec<(&str, &str)> = ids.iter().map(|id| (*id, self.text_of(id))).collect();
                match rerank(r, query, &pairs, config.top_k) {
                    Ok(ranked) => (ranked, false),
                    Err(e) if config.fallback_to_retrieval_order => {
                        log::warn!("reranker failed, using retrieval order: {e}");
                        (retrieval_order(&ids, config.top_k), true)
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let examples = ranked
            .into_iter()
            .map(|r| {
                let e = &self.entries[self.positions[&r.clause_id]];
                RetrievedExample {
                    clause_id: r.clause_id,
                    text: e.text.clone(),
                    labels: e.labels.clone(),
                    relevance: r.relevance,
                    rank: r.rank,
                }
            })
            .collect();
        Ok(Retrieval { candidates, examples, fell_back })
    }

    fn text_of(&self, id: &str) -> &str {
        &self.entries[self.positions[id]].text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{HashEmbedder, OverlapReranker};

    fn entries(texts: &[&str]) -> Vec<KbEntry> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| KbEntry { id: format!("e{i}"), text: t.to_string(), labels: vec![] })
            .collect()
    }

    #[test]
    fn one_clause_gives_sizes_one() {
        let (d, s) = build_indexes(&entries(&["única cláusula del contrato"]), &HashEmbedder::new(32), Bm25Params::default())
            .unwrap();
        assert_eq!((d.len(), s.len()), (1, 1));
    }

    #[test]
    fn verbatim_duplicates_get_identical_vectors() {
        let (d, _) = build_indexes(&entries(&["misma cláusula", "otra cosa", "misma cláusula"]), &HashEmbedder::new(64), Bm25Params::default())
            .unwrap();
        assert_eq!(d.vector(0), d.vector(2));
    }

    struct Drifting;
    impl EmbeddingProvider for Drifting {
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, LlmError> {
            Ok(texts.iter().enumerate().map(|(i, _)| vec![1.0; if i == 3 { 7 } else { 8 }]).collect())
        }
    }

    #[test]
    fn dimension_drift_is_an_error() {
        let err = build_indexes(&entries(&["a", "b", "c", "d", "e"]), &Drifting, Bm25Params::default()).unwrap_err();
        assert!(matches!(err, RetrievalError::Dimension { expected: 8, got: 7 }));
    }

    #[test]
    fn empty_build_is_an_error() {
        assert!(matches!(build_indexes(&[], &HashEmbedder::new(8), Bm25Params::default()), Err(RetrievalError::EmptyIndex)));
    }

    #[test]
    fn save_load_round_trip_and_self_retrieval() {
        let kb = KnowledgeBase::build(
            entries(&[
                "la empresa podrá modificar los términos en cualquier momento",
                "el usuario acepta la jurisdicción de los tribunales de santiago",
                "no nos hacemos responsables por daños indirectos",
            ]),
            &HashEmbedder::default(),
            Bm25Params::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        kb.save(dir.path()).unwrap();
        let back = KnowledgeBase::load(dir.path()).unwrap();
        assert_eq!(back.entries(), kb.entries());
        assert_eq!(back.dense(), kb.dense());
        assert_eq!(back.sparse(), kb.sparse());

        let cfg = RetrievalConfig { top_k: 2, ..Default::default() };
        let r = back
            .retrieve(&kb.entries()[1].text, &HashEmbedder::default(), Some(&OverlapReranker), &cfg, None)
            .unwrap();
        assert_eq!(r.examples[0].clause_id, "e1");
        assert_eq!(r.examples.len(), 2);
    }

    #[test]
    fn filter_restricts_candidates() {
        let kb = KnowledgeBase::build(entries(&["pago mensual", "pago anual", "cookies"]), &HashEmbedder::default(), Bm25Params::default())
            .unwrap();
        let keep = |e: &KbEntry| e.id != "e0";
        let r = kb
            .retrieve("pago mensual", &HashEmbedder::default(), None, &RetrievalConfig::default(), Some(&keep))
            .unwrap();
        assert!(r.candidates.iter().all(|c| c.clause_id != "e0"));
    }

    #[test]
    fn misaligned_parts_rejected() {
        let es = entries(&["a b", "c d"]);
        let (d, s) = build_indexes(&es, &HashEmbedder::new(8), Bm25Params::default()).unwrap();
        assert!(KnowledgeBase::from_parts(es[..1].to_vec(), d, s).is_err());
    }
}

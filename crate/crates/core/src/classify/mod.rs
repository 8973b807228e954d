//! The scan pipeline (chunk, detect, classify flagged chunks per category),
//! the findings schema, the retrieval-only majority-vote classifier and
//! batch classification for experiments.

mod batch;
mod findings;
mod pipeline;

use thiserror::Error;

pub use batch::{classify_batch, BatchContext, ClassifyMode, Prediction};
pub use findings::{
    CategoryResult, ClauseFinding, ContentType, DocumentSummary, FindingsReport, SimilarExample, FINDINGS_SCHEMA_VERSION,
};
pub use pipeline::{AuditEntry, Pipeline, PipelineConfig, ScanOptions, ScanOutcome};

use crate::corpus::{TaskSpec, Taxonomy};
use crate::llm::{EmbeddingProvider, LlmError, RerankProvider};
use crate::prompting::PromptError;
use crate::retrieval::{KbEntry, KnowledgeBase, RetrievalConfig, RetrievalError};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("no knowledge-base examples available for this task")]
    EmptyIndex,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Majority rule over retrieved label sets: every label carried by more than
/// half of them, or failing that the single most frequent label (earliest in
/// `class_set` on ties). Labels outside `class_set` are ignored.
pub fn vote<S: AsRef<str>>(label_sets: &[Vec<S>], class_set: &[String]) -> Vec<String> {
    let k = label_sets.len();
    let counts: Vec<usize> = class_set
        .iter()
        .map(|c| label_sets.iter().filter(|set| set.iter().any(|l| l.as_ref() == c)).count())
        .collect();
    let majority: Vec<String> =
        class_set.iter().zip(&counts).filter(|(_, &n)| 2 * n > k).map(|(c, _)| c.clone()).collect();
    if !majority.is_empty() {
        return majority;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Vec::new();
    }
    let i = counts.iter().position(|&n| n == best).expect("max exists");
    vec![class_set[i].clone()]
}

/// Retrieval-only baseline: retrieves the top k examples of the task's
/// category and votes over their (task-projected) labels.
pub fn majority_vote(
    kb: &KnowledgeBase,
    query: &str,
    embedder: &dyn EmbeddingProvider,
    reranker: Option<&dyn RerankProvider>,
    config: &RetrievalConfig,
    task: &TaskSpec,
    taxonomy: &Taxonomy,
) -> Result<Vec<String>, ClassifyError> {
    let keep = |e: &KbEntry| task.target(&e.labels, taxonomy).is_some();
    let r = kb.retrieve(query, embedder, reranker, config, Some(&keep))?;
    if r.examples.is_empty() {
        return Err(ClassifyError::EmptyIndex);
    }
    let sets: Vec<Vec<String>> =
        r.examples.iter().filter_map(|e| task.target(&e.labels, taxonomy)).collect();
    Ok(vote(&sets, &task.class_set))
}

//! Pattern-completion prompts (`Cláusula:` / `Etiqueta:` blocks ending in a
//! dangling hook) and parsing of completions back into labels.

mod fewshot;
mod parse;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fewshot::{build_fewshot, spaced_indices};
pub use parse::{parse_labels, ParsedPrediction};
pub use template::{PromptTemplate, DEFAULT_TEMPLATE_VERSION};

use crate::corpus::{TaskSpec, Taxonomy};
use crate::retrieval::RetrievedExample;
use crate::text::normalize_whitespace;

pub const CLAUSE_PREFIX: &str = "Cláusula:";
pub const HOOK: &str = "Etiqueta:";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("class '{class}' has {available} candidate(s), {needed} needed")]
    NotEnoughExamples { class: String, needed: usize, available: usize },
    #[error("no examples for a RAG prompt (zero-shot not enabled)")]
    NoExamples,
    #[error("invalid template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub clause_id: String,
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Provenance {
    FewShot { k: usize, clause_ids: Vec<String> },
    Rag { candidates: usize, top_k: usize, clause_ids: Vec<String> },
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: TaskSpec,
    pub template_version: String,
    pub instruction: String,
    pub examples: Vec<PromptExample>,
    pub query_text: String,
    pub rendered: String,
    pub provenance: Provenance,
    pub shuffle_seed: Option<u64>,
}

fn render_examples(examples: &[PromptExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(CLAUSE_PREFIX);
        out.push(' ');
        out.push_str(&normalize_whitespace(&e.text));
        out.push('\n');
        out.push_str(HOOK);
        out.push(' ');
        out.push_str(&e.labels.join(", "));
        out.push_str("\n\n");
    }
    out
}

fn bundle(
    task: &TaskSpec,
    template: &PromptTemplate,
    examples: Vec<PromptExample>,
    query: &str,
    provenance: Provenance,
    shuffle_seed: Option<u64>,
) -> PromptBundle {
    let instruction = template.instruction(task.kind, &task.class_set);
    let rendered = template.render(&instruction, &render_examples(&examples), &normalize_whitespace(query));
    PromptBundle {
        task: task.clone(),
        template_version: template.version.clone(),
        instruction,
        examples,
        query_text: query.to_string(),
        rendered,
        provenance,
        shuffle_seed,
    }
}

/// Renders a prompt around an already built few-shot support set.
pub fn build_fewshot_prompt(
    task: &TaskSpec,
    support: Vec<PromptExample>,
    k: usize,
    seed: u64,
    query: &str,
    template: &PromptTemplate,
) -> PromptBundle {
    let clause_ids = support.iter().map(|e| e.clause_id.clone()).collect();
    bundle(task, template, support, query, Provenance::FewShot { k, clause_ids }, Some(seed))
}

/// Renders a RAG prompt with examples in rerank order. Example labels are
/// projected onto the task; examples outside a classification task's
/// category are skipped.
pub fn build_rag_prompt(
    task: &TaskSpec,
    taxonomy: &Taxonomy,
    query: &str,
    reranked: &[RetrievedExample],
    candidates: usize,
    template: &PromptTemplate,
    allow_zero_shot: bool,
) -> Result<PromptBundle, PromptError> {
    let examples: Vec<PromptExample> = reranked
        .iter()
        .filter_map(|r| {
            let labels = task.target(&r.labels, taxonomy)?;
            Some(PromptExample { clause_id: r.clause_id.clone(), text: r.text.clone(), labels })
        })
        .collect();
    if examples.is_empty() {
        if !allow_zero_shot {
            return Err(PromptError::NoExamples);
        }
        return Ok(bundle(task, template, examples, query, Provenance::ZeroShot, None));
    }
    let clause_ids = examples.iter().map(|e| e.clause_id.clone()).collect();
    let provenance = Provenance::Rag { candidates, top_k: reranked.len(), clause_ids };
    Ok(bundle(task, template, examples, query, provenance, None))
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{vote, ClassifyError};
use crate::corpus::{TaskExample, TaskSpec, Taxonomy};
use crate::llm::{ChatProvider, EmbeddingProvider, RerankProvider};
use crate::prompting::{build_fewshot, build_fewshot_prompt, build_rag_prompt, parse_labels, PromptExample, PromptTemplate};
use crate::retrieval::{KbEntry, KnowledgeBase, RetrievalConfig, RetrievalMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ClassifyMode {
    FewShot { k: usize },
    Rag { retrieval: RetrievalMode },
    MajorityVote { retrieval: RetrievalMode },
}

/// Everything a batch run may need; unused parts can be `None`.
pub struct BatchContext<'a> {
    pub taxonomy: &'a Taxonomy,
    pub template: &'a PromptTemplate,
    pub kb: Option<&'a KnowledgeBase>,
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub reranker: Option<&'a dyn RerankProvider>,
    pub chat: Option<&'a dyn ChatProvider>,
    pub retrieval: RetrievalConfig,
    /// Few-shot candidate pool (the training split).
    pub train_pool: &'a [TaskExample],
    pub seed: u64,
    pub concurrency: usize,
}

/// One classified instance; also readable as an error-analysis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clause_id: String,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    /// Task-projected label sets of the prompt (or vote) examples.
    pub retrieved_labels: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Classifies every example. Per-instance failures are recorded on the
/// prediction (scored as an empty label set); configuration problems abort.
pub fn classify_batch(
    ctx: &BatchContext<'_>,
    task: &TaskSpec,
    examples: &[TaskExample],
    mode: ClassifyMode,
) -> Result<Vec<Prediction>, ClassifyError> {
    let need = |what: &str| ClassifyError::Config(format!("{what} required for this mode"));
    let support = match mode {
        ClassifyMode::FewShot { k } => {
            ctx.chat.ok_or_else(|| need("chat provider"))?;
            Some(build_fewshot(ctx.train_pool, task, k, ctx.seed)?)
        }
        ClassifyMode::Rag { .. } => {
            ctx.chat.ok_or_else(|| need("chat provider"))?;
            ctx.kb.ok_or_else(|| need("knowledge base"))?;
            ctx.embedder.ok_or_else(|| need("embedding provider"))?;
            None
        }
        ClassifyMode::MajorityVote { .. } => {
            ctx.kb.ok_or_else(|| need("knowledge base"))?;
            ctx.embedder.ok_or_else(|| need("embedding provider"))?;
            None
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.concurrency.max(1))
        .build()
        .map_err(|e| ClassifyError::Config(e.to_string()))?;
    Ok(pool.install(|| examples.par_iter().map(|ex| classify_one(ctx, task, ex, mode, support.as_deref())).collect()))
}

fn classify_one(
    ctx: &BatchContext<'_>,
    task: &TaskSpec,
    ex: &TaskExample,
    mode: ClassifyMode,
    support: Option<&[PromptExample]>,
) -> Prediction {
    let mut p = Prediction {
        clause_id: ex.clause_id.clone(),
        gold: ex.target.clone(),
        predicted: Vec::new(),
        retrieved_labels: Vec::new(),
        warnings: Vec::new(),
        raw: None,
        error: None,
    };
    if let Err(e) = run_one(ctx, task, ex, mode, support, &mut p) {
        p.error = Some(e.to_string());
    }
    p
}

fn run_one(
    ctx: &BatchContext<'_>,
    task: &TaskSpec,
    ex: &TaskExample,
    mode: ClassifyMode,
    support: Option<&[PromptExample]>,
    p: &mut Prediction,
) -> Result<(), ClassifyError> {
    let bundle = match mode {
        ClassifyMode::FewShot { k } => {
            let support = support.unwrap_or_default().to_vec();
            p.retrieved_labels = support.iter().map(|e| e.labels.clone()).collect();
            build_fewshot_prompt(task, support, k, ctx.seed, &ex.text, ctx.template)
        }
        ClassifyMode::Rag { retrieval } | ClassifyMode::MajorityVote { retrieval } => {
            let kb = ctx.kb.expect("checked");
            let keep = |e: &KbEntry| e.id != ex.clause_id && task.target(&e.labels, ctx.taxonomy).is_some();
            let config = RetrievalConfig { mode: retrieval, ..ctx.retrieval.clone() };
            let r = kb.retrieve(&ex.text, ctx.embedder.expect("checked"), ctx.reranker, &config, Some(&keep))?;
            p.retrieved_labels = r.examples.iter().filter_map(|e| task.target(&e.labels, ctx.taxonomy)).collect();
            if let ClassifyMode::MajorityVote { .. } = mode {
                if r.examples.is_empty() {
                    return Err(ClassifyError::EmptyIndex);
                }
                p.predicted = vote(&p.retrieved_labels, &task.class_set);
                return Ok(());
            }
            build_rag_prompt(task, ctx.taxonomy, &ex.text, &r.examples, config.candidates, ctx.template, false)?
        }
    };
    let chat = ctx.chat.expect("checked").complete(&bundle.rendered)?;
    let parsed = parse_labels(&chat.text, task);
    p.predicted = parsed.labels;
    p.warnings = parsed.warnings;
    p.raw = Some(chat.text);
    Ok(())
}

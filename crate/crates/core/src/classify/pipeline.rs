use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::findings::{
    CategoryResult, ClauseFinding, ContentType, DocumentSummary, FindingsReport, SimilarExample, FINDINGS_SCHEMA_VERSION,
};
use super::ClassifyError;
use crate::chunker::{chunk_html, chunk_text, Chunk, DEFAULT_MIN_WORDS};
use crate::corpus::{Category, TaskName, TaskSpec, Taxonomy};
use crate::detector::LinearDetector;
use crate::llm::{ChatProvider, EmbeddingProvider, RerankProvider, TokenUsage};
use crate::prompting::{build_rag_prompt, parse_labels, PromptBundle, PromptTemplate};
use crate::retrieval::{embed_query, KbEntry, KnowledgeBase, RetrievalConfig, RetrievedExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub min_words: usize,
    pub categories: Vec<Category>,
    pub retrieval: RetrievalConfig,
    pub max_similar: usize,
    /// Chunks classified in parallel.
    pub concurrency: usize,
    /// Attach the prompt bundles to each finding.
    pub audit_prompts: bool,
    /// Prompt without examples when a category has none in the knowledge base.
    pub allow_zero_shot: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_words: DEFAULT_MIN_WORDS,
            categories: Category::ALL.to_vec(),
            retrieval: RetrievalConfig::default(),
            max_similar: 5,
            concurrency: 4,
            audit_prompts: false,
            allow_zero_shot: false,
        }
    }
}

/// Per-request overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub categories: Option<Vec<Category>>,
    pub threshold: Option<f64>,
    pub include_similar: bool,
    pub max_similar: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { categories: None, threshold: None, include_similar: true, max_similar: None }
    }
}

/// One classification call, kept out of the findings so that they stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub chunk_index: usize,
    pub category: Category,
    pub llm_called: bool,
    pub latency_ms: u64,
    pub retries: u32,
    pub token_usage: TokenUsage,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub report: FindingsReport,
    pub audit: Vec<AuditEntry>,
}

impl ScanOutcome {
    pub fn llm_calls(&self) -> usize {
        self.audit.iter().filter(|a| a.llm_called).count()
    }
}

pub struct Pipeline {
    taxonomy: Taxonomy,
    detector: LinearDetector,
    kb: KnowledgeBase,
    embedder: Arc<dyn EmbeddingProvider>,
    reranker: Option<Arc<dyn RerankProvider>>,
    chat: Arc<dyn ChatProvider>,
    template: PromptTemplate,
    config: PipelineConfig,
    pool: rayon::ThreadPool,
}

struct CategoryOutput {
    result: CategoryResult,
    examples: Vec<RetrievedExample>,
    bundle: Option<PromptBundle>,
    audit: AuditEntry,
}

impl Pipeline {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        taxonomy: Taxonomy,
        detector: LinearDetector,
        kb: KnowledgeBase,
        embedder: Arc<dyn EmbeddingProvider>,
        reranker: Option<Arc<dyn RerankProvider>>,
        chat: Arc<dyn ChatProvider>,
        template: PromptTemplate,
        config: PipelineConfig,
    ) -> Result<Self, ClassifyError> {
        if config.concurrency == 0 {
            return Err(ClassifyError::Config("concurrency must be at least 1".into()));
        }
        if config.retrieval.top_k == 0 || config.retrieval.candidates == 0 {
            return Err(ClassifyError::Config("retrieval candidates and top_k must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.concurrency)
            .build()
            .map_err(|e| ClassifyError::Config(e.to_string()))?;
        Ok(Self { taxonomy, detector, kb, embedder, reranker, chat, template, config, pool })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn detector(&self) -> &LinearDetector {
        &self.detector
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    pub fn reranker(&self) -> Option<&dyn RerankProvider> {
        self.reranker.as_deref()
    }

    pub fn chunk(&self, content: &str, content_type: ContentType) -> Vec<Chunk> {
        match content_type {
            ContentType::Html => chunk_html(content, self.config.min_words),
            ContentType::Text => chunk_text(content, self.config.min_words),
        }
    }

    /// Chunks, detects and classifies a document. Failures while classifying
    /// one chunk are reported on that finding; the scan itself never fails.
    pub fn scan(&self, content: &str, content_type: ContentType, options: &ScanOptions) -> ScanOutcome {
        let chunks = self.chunk(content, content_type);
        let threshold = options.threshold.unwrap_or(self.detector.threshold);
        let flagged: Vec<(usize, Chunk, f64)> = chunks
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                let score = self.detector.score(&c.text);
                (score > threshold).then(|| (i, c.clone(), score))
            })
            .collect();
        let categories = options.categories.clone().unwrap_or_else(|| self.config.categories.clone());
        let max_similar = options.max_similar.unwrap_or(self.config.max_similar);
        let include_similar = options.include_similar;

        let results: Vec<(ClauseFinding, Vec<AuditEntry>)> = self.pool.install(|| {
            flagged
                .par_iter()
                .map(|(i, chunk, score)| self.classify_chunk(*i, chunk, *score, &categories, include_similar, max_similar))
                .collect()
        });
        let mut findings = Vec::with_capacity(results.len());
        let mut audit = Vec::new();
        for (f, a) in results {
            findings.push(f);
            audit.extend(a);
        }
        ScanOutcome {
            report: FindingsReport {
                schema_version: FINDINGS_SCHEMA_VERSION.to_string(),
                document: DocumentSummary {
                    content_type,
                    char_count: content.chars().count(),
                    chunk_count: chunks.len(),
                    flagged_count: flagged.len(),
                },
                findings,
            },
            audit,
        }
    }

    fn classify_chunk(
        &self,
        index: usize,
        chunk: &Chunk,
        score: f64,
        categories: &[Category],
        include_similar: bool,
        max_similar: usize,
    ) -> (ClauseFinding, Vec<AuditEntry>) {
        let query_vector = embed_query(self.embedder.as_ref(), &chunk.text);
        let outputs: Vec<CategoryOutput> = categories
            .iter()
            .map(|&cat| match &query_vector {
                Ok(v) => self.classify_category(index, &chunk.text, v, cat),
                Err(e) => failed(index, cat, e.to_string()),
            })
            .collect();

        let mut labels: Vec<String> =
            outputs.iter().flat_map(|o| o.result.labels.iter().map(|l| l.code.clone())).collect();
        self.taxonomy.sort_codes(&mut labels);
        labels.dedup();

        let mut similar: Vec<SimilarExample> = Vec::new();
        if include_similar {
            let mut best: HashMap<&str, usize> = HashMap::new();
            for e in outputs.iter().flat_map(|o| &o.examples) {
                match best.get(e.clause_id.as_str()) {
                    Some(&j) if similar[j].relevance >= e.relevance => {}
                    Some(&j) => similar[j].relevance = e.relevance,
                    None => {
                        best.insert(&e.clause_id, similar.len());
                        similar.push(SimilarExample {
                            clause_id: e.clause_id.clone(),
                            text: e.text.clone(),
                            labels: e.labels.clone(),
                            relevance: e.relevance,
                        });
                    }
                }
            }
            similar.sort_by(|a, b| {
                b.relevance.partial_cmp(&a.relevance).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.clause_id.cmp(&b.clause_id))
            });
            similar.truncate(max_similar);
        }

        let partial = outputs.iter().any(|o| o.result.error.is_some());
        let mut results = Vec::with_capacity(outputs.len());
        let mut bundles = Vec::new();
        let mut audit = Vec::with_capacity(outputs.len());
        for o in outputs {
            results.push(o.result);
            audit.push(o.audit);
            if self.config.audit_prompts {
                bundles.extend(o.bundle);
            }
        }
        let finding = ClauseFinding {
            chunk_index: index,
            text: chunk.text.clone(),
            char_span: chunk.char_span,
            dom_path: chunk.dom_path.clone(),
            detection_score: score,
            categories: results,
            labels,
            similar_examples: similar,
            partial,
            prompt_audit: bundles,
        };
        (finding, audit)
    }

    fn classify_category(&self, index: usize, text: &str, query_vector: &[f32], category: Category) -> CategoryOutput {
        let task = TaskSpec::new(TaskName::classify(category), &self.taxonomy);
        let keep = |e: &KbEntry| e.labels.iter().any(|l| self.taxonomy.category_of(l) == Some(category));
        let retrieval = match self.kb.retrieve_embedded(
            text,
            query_vector,
            self.reranker.as_deref(),
            &self.config.retrieval,
            Some(&keep),
        ) {
            Ok(r) => r,
            Err(e) => return failed(index, category, e.to_string()),
        };
        let bundle = match build_rag_prompt(
            &task,
            &self.taxonomy,
            text,
            &retrieval.examples,
            self.config.retrieval.candidates,
            &self.template,
            self.config.allow_zero_shot,
        ) {
            Ok(b) => b,
            Err(e) => return failed(index, category, ClassifyError::from(e).to_string()),
        };
        let mut audit = AuditEntry {
            chunk_index: index,
            category,
            llm_called: true,
            latency_ms: 0,
            retries: 0,
            token_usage: TokenUsage::default(),
            error: None,
        };
        let mut result = CategoryResult {
            category,
            task: task.name,
            labels: Vec::new(),
            warnings: Vec::new(),
            error: None,
            rerank_fallback: retrieval.fell_back,
        };
        match self.chat.complete(&bundle.rendered) {
            Ok(chat) => {
                audit.latency_ms = chat.latency_ms;
                audit.retries = chat.retries;
                audit.token_usage = chat.token_usage;
                let parsed = parse_labels(&chat.text, &task);
                result.labels = parsed.labels.iter().filter_map(|c| self.taxonomy.get(c).cloned()).collect();
                result.warnings = parsed.warnings;
            }
            Err(e) => {
                log::warn!("chunk {index} {}: {e}", category.as_str());
                audit.error = Some(e.to_string());
                result.error = Some(e.to_string());
            }
        }
        CategoryOutput { result, examples: retrieval.examples, bundle: Some(bundle), audit }
    }
}

fn failed(index: usize, category: Category, message: String) -> CategoryOutput {
    log::warn!("chunk {index} {}: {message}", category.as_str());
    CategoryOutput {
        result: CategoryResult {
            category,
            task: TaskName::classify(category),
            labels: Vec::new(),
            warnings: Vec::new(),
            error: Some(message.clone()),
            rerank_fallback: false,
        },
        examples: Vec::new(),
        bundle: None,
        audit: AuditEntry {
            chunk_index: index,
            category,
            llm_called: false,
            latency_ms: 0,
            retries: 0,
            token_usage: TokenUsage::default(),
            error: Some(message),
        },
    }
}

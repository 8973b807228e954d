//! Detection and classification of potentially abusive clauses in Terms of
//! Service: chunking, a TF-IDF linear detector, hybrid retrieval over an
//! annotated knowledge base, pattern-completion prompting, evaluation and
//! random-effects configuration ranking.

pub mod chunker;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod demo;
pub mod detector;
pub mod eval;
pub mod llm;
pub mod meta_analysis;
pub mod prompting;
pub mod retrieval;
pub mod text;

pub use chunker::{chunk_html, chunk_text, Chunk};
pub use classify::{
    majority_vote, CategoryResult, ClauseFinding, ContentType, FindingsReport, Pipeline, PipelineConfig, ScanOptions,
    ScanOutcome, SimilarExample,
};
pub use config::AppConfig;
pub use corpus::{Category, Clause, Corpus, LabelCode, TaskName, TaskSpec, Taxonomy};
pub use detector::LinearDetector;
pub use eval::{f1_scores, MetricReport};
pub use llm::{ChatProvider, EmbeddingProvider, RerankProvider};
pub use meta_analysis::{rank_configs, MetaResult};
pub use prompting::{PromptBundle, PromptTemplate};
pub use retrieval::{KnowledgeBase, RetrievalConfig, RetrievalMode};

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, LabelCode, TaskName};
use crate::prompting::PromptBundle;

/// Bumped on any breaking change to the findings JSON.
pub const FINDINGS_SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentType {
    Html,
    #[default]
    Text,
}

impl std::str::FromStr for ContentType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "html" => Ok(Self::Html),
            "text" => Ok(Self::Text),
            other => Err(format!("unsupported content_type '{other}' (expected html or text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarExample {
    pub clause_id: String,
    pub text: String,
    pub labels: Vec<String>,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category: Category,
    pub task: TaskName,
    /// Predicted labels with their taxonomy metadata, in taxonomy order.
    pub labels: Vec<LabelCode>,
    /// Completion tokens that matched no label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Set when this category could not be classified; `labels` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// True when the reranker failed and retrieval order was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rerank_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseFinding {
    /// Position among all chunks of the document.
    pub chunk_index: usize,
    pub text: String,
    /// Character offsets `[start, end)` into the submitted content.
    pub char_span: (usize, usize),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dom_path: Vec<String>,
    pub detection_score: f64,
    pub categories: Vec<CategoryResult>,
    /// Union of the per-category labels, in taxonomy order.
    pub labels: Vec<String>,
    /// Sorted by relevance, descending.
    pub similar_examples: Vec<SimilarExample>,
    /// True when at least one category failed.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_audit: Vec<PromptBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub content_type: ContentType,
    pub char_count: usize,
    pub chunk_count: usize,
    pub flagged_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsReport {
    pub schema_version: String,
    pub document: DocumentSummary,
    /// In document order.
    pub findings: Vec<ClauseFinding>,
}

impl FindingsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("findings serialize")
    }
}

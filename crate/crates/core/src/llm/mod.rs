//! Provider-agnostic chat, embedding and rerank clients.
//!
//! Everything that talks to a model goes through one of three traits, with an
//! HTTP implementation for OpenAI-compatible servers and deterministic stubs
//! for offline runs. HTTP traffic can be recorded to and replayed from a
//! cassette file so tests never need the network.

mod cassette;
mod http;
mod ratelimit;
mod stub;
mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{cassette_key, CassetteMode, CassetteTransport};
pub use http::{HttpChatClient, HttpEmbeddingClient, HttpRerankClient};
pub use ratelimit::TokenBucket;
pub use stub::{
    hash_embedding, overlap_score, query_clause, HashEmbedder, OverlapReranker, ScriptedTransport, StubChat,
};
pub use transport::{HttpResponse, ReqwestTransport, Transport, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {excerpt}")]
    Provider { status: u16, excerpt: String },
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid provider config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Chat,
    Embedding,
    Rerank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself is
    /// never stored in configs, logs or cassettes.
    pub api_key_env_var: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    /// Chat only: sets the provider's reasoning toggle when `Some`.
    pub reasoning_enabled: Option<bool>,
    /// Chat only.
    pub temperature: f64,
    /// Chat only.
    pub max_tokens: u32,
    /// Embedding only: texts per request.
    pub batch_size: usize,
    pub requests_per_second: Option<f64>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Chat,
            base_url: "http://localhost:11434/v1".into(),
            model_name: String::new(),
            api_key_env_var: None,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            reasoning_enabled: None,
            temperature: 0.0,
            max_tokens: 256,
            batch_size: 64,
            requests_per_second: None,
        }
    }
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self { kind, base_url: base_url.into(), model_name: model_name.into(), ..Default::default() }
    }

    pub fn validate(&self, expected: ProviderKind) -> Result<(), LlmError> {
        if self.kind != expected {
            return Err(LlmError::Config(format!("expected a {expected:?} provider, got {:?}", self.kind)));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(LlmError::Config("batch_size must be at least 1".into()));
        }
        if let Some(rps) = self.requests_per_second {
            if !(rps.is_finite() && rps > 0.0) {
                return Err(LlmError::Config("requests_per_second must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResult {
    pub text: String,
    pub token_usage: TokenUsage,
    pub latency_ms: u64,
    /// Transient failures retried before this result.
    pub retries: u32,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<ChatResult, LlmError>;
}

pub trait EmbeddingProvider: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, LlmError>;
}

pub trait RerankProvider: Send + Sync {
    /// One finite relevance score per text; higher is more relevant.
    fn rerank_scores(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, LlmError>;
}

/// Checks that every vector has the same dimension as the first one (or `expected`).
pub fn check_dimensions(vectors: &[Vec<f32>], expected: Option<usize>) -> Result<usize, LlmError> {
    let dim = expected.or_else(|| vectors.first().map(Vec::len)).unwrap_or(0);
    for v in vectors {
        if v.len() != dim {
            return Err(LlmError::Dimension { expected: dim, got: v.len() });
        }
    }
    Ok(dim)
}

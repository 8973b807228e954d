//! Deterministic offline providers.

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;

use super::{
    ChatProvider, ChatResult, EmbeddingProvider, HttpResponse, LlmError, RerankProvider,
    TokenUsage, Transport, TransportError,
};
use crate::text::{fnv1a64, terms};

/// Feature-hashing embedding.
///
/// Every term `t` of the text (lowercased alphanumeric run) adds `±1` to
/// component `h mod dim` where `h = FNV-1a-64(t)`; the sign is `-1` when the
/// top bit of `h` is set. The result is not normalized.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    for term in terms(text) {
        let h = fnv1a64(term.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, LlmError> {
        Ok(texts.iter().map(|t| hash_embedding(t, self.dim)).collect())
    }
}

/// Number of distinct query terms that also occur in `text`.
pub fn overlap_score(query: &str, text: &str) -> f64 {
    let q: HashSet<String> = terms(query).into_iter().collect();
    let d: HashSet<String> = terms(text).into_iter().collect();
    q.intersection(&d).count() as f64
}

/// Scores by shared distinct terms.
#[derive(Debug, Default, Clone, Copy)]
pub struct OverlapReranker;

impl RerankProvider for OverlapReranker {
    fn rerank_scores(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, LlmError> {
        Ok(texts.iter().map(|t| overlap_score(query, t)).collect())
    }
}

type ChatFn = dyn Fn(&str) -> Result<String, LlmError> + Send + Sync;

enum Mode {
    Constant(String),
    FirstExample,
    Keywords { rules: Vec<(String, String)>, fallback: String },
    Custom(Arc<ChatFn>),
}

/// Scripted chat model that counts its calls.
pub struct StubChat {
    mode: Mode,
    calls: AtomicUsize,
}

impl StubChat {
    fn with(mode: Mode) -> Self {
        Self { mode, calls: AtomicUsize::new(0) }
    }

    /// Always answers `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        Self::with(Mode::Constant(text.into()))
    }

    /// Answers with the label line of the first in-context example, i.e. copies
    /// the most relevant neighbour. Empty when the prompt has no examples.
    pub fn first_example() -> Self {
        Self::with(Mode::FirstExample)
    }

    /// Answers the completion of the first rule whose keyword occurs
    /// (case-insensitively) in the query clause, else `fallback`.
    pub fn keywords(rules: Vec<(String, String)>, fallback: impl Into<String>) -> Self {
        let rules = rules.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        Self::with(Mode::Keywords { rules, fallback: fallback.into() })
    }

    pub fn from_fn(f: impl Fn(&str) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        Self::with(Mode::Custom(Arc::new(f)))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// The clause text after the last "Cláusula:" marker.
/// The clause text of the final `Cláusula:` block of a prompt.
pub fn query_clause(prompt: &str) -> &str {
    let tail = prompt.rfind("Cláusula:").map_or(prompt, |i| &prompt[i + "Cláusula:".len()..]);
    tail.rfind("Etiqueta:").map_or(tail, |i| &tail[..i]).trim()
}

impl ChatProvider for StubChat {
    fn complete(&self, prompt: &str) -> Result<ChatResult, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = match &self.mode {
            Mode::Constant(t) => t.clone(),
            Mode::FirstExample => {
                let hook = prompt.rfind("Cláusula:").unwrap_or(prompt.len());
                prompt[..hook]
                    .lines()
                    .find_map(|l| l.trim_start().strip_prefix("Etiqueta:"))
                    .map(|l| l.trim().to_string())
                    .unwrap_or_default()
            }
            Mode::Keywords { rules, fallback } => {
                let query = query_clause(prompt).to_lowercase();
                rules
                    .iter()
                    .find(|(k, _)| query.contains(k.as_str()))
                    .map_or_else(|| fallback.clone(), |(_, v)| v.clone())
            }
            Mode::Custom(f) => f(prompt)?,
        };
        Ok(ChatResult {
            token_usage: TokenUsage {
                prompt: terms(prompt).len() as u64,
                completion: terms(&text).len() as u64,
            },
            text,
            latency_ms: 0,
            retries: 0,
        })
    }
}

type Exchange = (String, Value);

/// Transport that plays back a fixed list of outcomes and records requests.
/// Once the script is exhausted every call fails.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
    requests: Mutex<Vec<Exchange>>,
    headers: Mutex<Vec<Vec<(String, String)>>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<HttpResponse, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
            headers: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<Exchange> {
        self.requests.lock().expect("poisoned").clone()
    }

    pub fn headers(&self) -> Vec<Vec<(String, String)>> {
        self.headers.lock().expect("poisoned").clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        _timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        self.requests.lock().expect("poisoned").push((url.to_string(), body.clone()));
        self.headers.lock().expect("poisoned").push(headers.to_vec());
        self.script
            .lock()
            .expect("poisoned")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
    }
}

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    check_dimensions, ChatProvider, ChatResult, EmbeddingProvider, HttpResponse, LlmError,
    ProviderConfig, ProviderKind, RerankProvider, TokenBucket, TokenUsage, Transport,
};

const EXCERPT_CHARS: usize = 300;
const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Shared request machinery: auth header, rate limiting, retries.
struct Endpoint {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    limiter: Option<TokenBucket>,
}

impl Endpoint {
    fn new(config: ProviderConfig, kind: ProviderKind, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        config.validate(kind)?;
        let limiter = config.requests_per_second.map(TokenBucket::per_second);
        Ok(Self { config, transport, limiter })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn headers(&self) -> Vec<(String, String)> {
        let mut headers = Vec::new();
        if let Some(var) = &self.config.api_key_env_var {
            if let Ok(key) = std::env::var(var) {
                headers.push(("Authorization".to_string(), format!("Bearer {key}")));
            }
        }
        headers
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx with exponential backoff.
    /// Returns the parsed JSON body and the number of retries used.
    fn post(&self, path: &str, body: &Value) -> Result<(Value, u32), LlmError> {
        let url = self.url(path);
        let headers = self.headers();
        let attempts = self.config.max_retries + 1;
        let mut last_err = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let exp = self.config.backoff_ms.saturating_mul(1u64 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(exp).min(MAX_BACKOFF));
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.transport.post_json(&url, &headers, body, self.config.timeout()) {
                Ok(resp) if resp.is_success() => {
                    let value = serde_json::from_str(&resp.body)
                        .map_err(|e| LlmError::Protocol(format!("invalid JSON body: {e}")))?;
                    return Ok((value, attempt));
                }
                Ok(resp) if retryable(&resp) => {
                    log::warn!("{url}: HTTP {} (attempt {}/{attempts})", resp.status, attempt + 1);
                    last_err = Some(provider_error(&resp));
                }
                Ok(resp) => return Err(provider_error(&resp)),
                Err(e) => {
                    log::warn!("{url}: {e} (attempt {}/{attempts})", attempt + 1);
                    last_err = Some(LlmError::Transport { attempts: attempt + 1, message: e.0 });
                }
            }
        }
        Err(match last_err {
            Some(LlmError::Transport { message, .. }) => LlmError::Transport { attempts, message },
            Some(e) => e,
            None => LlmError::Transport { attempts, message: "no attempt made".into() },
        })
    }
}

fn retryable(resp: &HttpResponse) -> bool {
    resp.status == 429 || resp.status >= 500
}

fn provider_error(resp: &HttpResponse) -> LlmError {
    LlmError::Provider { status: resp.status, excerpt: resp.body.chars().take(EXCERPT_CHARS).collect() }
}

/// Chat completions against an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpChatClient {
    endpoint: Endpoint,
}

impl HttpChatClient {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        Ok(Self { endpoint: Endpoint::new(config, ProviderKind::Chat, transport)? })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let cfg = &self.endpoint.config;
        let mut body = json!({
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "stream": false,
        });
        if let Some(enabled) = cfg.reasoning_enabled {
            body["reasoning"] = json!({ "enabled": enabled });
        }
        body
    }
}

impl ChatProvider for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<ChatResult, LlmError> {
        let started = Instant::now();
        let (value, retries) = self.endpoint.post("chat/completions", &self.request_body(prompt))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))?
            .to_string();
        let token_usage = TokenUsage {
            prompt: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(ChatResult { text, token_usage, latency_ms: started.elapsed().as_millis() as u64, retries })
    }
}

/// Embeddings against an OpenAI-compatible `/embeddings` endpoint, batched.
pub struct HttpEmbeddingClient {
    endpoint: Endpoint,
}

impl HttpEmbeddingClient {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        Ok(Self { endpoint: Endpoint::new(config, ProviderKind::Embedding, transport)? })
    }
}

impl EmbeddingProvider for HttpEmbeddingClient {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, LlmError> {
        let mut out: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.endpoint.config.batch_size) {
            let body = json!({ "model": self.endpoint.config.model_name, "input": batch });
            let (value, _) = self.endpoint.post("embeddings", &body)?;
            let data = value["data"]
                .as_array()
                .ok_or_else(|| LlmError::Protocol("missing data array".into()))?;
            if data.len() != batch.len() {
                return Err(LlmError::Protocol(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    data.len()
                )));
            }
            let mut rows: Vec<(usize, Vec<f32>)> = data
                .iter()
                .enumerate()
                .map(|(pos, item)| {
                    let index = item["index"].as_u64().map_or(pos, |i| i as usize);
                    let vec = item["embedding"]
                        .as_array()
                        .ok_or_else(|| LlmError::Protocol("missing embedding".into()))?
                        .iter()
                        .map(|x| x.as_f64().map(|f| f as f32))
                        .collect::<Option<Vec<f32>>>()
                        .ok_or_else(|| LlmError::Protocol("non-numeric embedding".into()))?;
                    Ok((index, vec))
                })
                .collect::<Result<_, LlmError>>()?;
            rows.sort_by_key(|(i, _)| *i);
            out.extend(rows.into_iter().map(|(_, v)| v));
        }
        check_dimensions(&out, None)?;
        Ok(out)
    }
}

/// Reranking over a minimal `{query, documents} -> {scores}` contract.
///
/// Responses in the common `{"results": [{"index", "relevance_score"}]}` shape
/// are accepted as well.
pub struct HttpRerankClient {
    endpoint: Endpoint,
}

impl HttpRerankClient {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        Ok(Self { endpoint: Endpoint::new(config, ProviderKind::Rerank, transport)? })
    }
}

impl RerankProvider for HttpRerankClient {
    fn rerank_scores(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, LlmError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.endpoint.config.model_name, "query": query, "documents": texts });
        let (value, _) = self.endpoint.post("rerank", &body)?;
        let scores = parse_rerank_scores(&value, texts.len())?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(LlmError::Protocol("non-finite rerank score".into()));
        }
        Ok(scores)
    }
}

fn parse_rerank_scores(value: &Value, n: usize) -> Result<Vec<f64>, LlmError> {
    if let Some(scores) = value["scores"].as_array() {
        let scores: Vec<f64> = scores
            .iter()
            .map(Value::as_f64)
            .collect::<Option<_>>()
            .ok_or_else(|| LlmError::Protocol("non-numeric score".into()))?;
        if scores.len() != n {
            return Err(LlmError::Protocol(format!("expected {n} scores, got {}", scores.len())));
        }
        return Ok(scores);
    }
    if let Some(results) = value["results"].as_array() {
        let mut scores = vec![f64::NAN; n];
        for r in results {
            let i = r["index"].as_u64().ok_or_else(|| LlmError::Protocol("missing index".into()))? as usize;
            let s = r["relevance_score"]
                .as_f64()
                .or_else(|| r["score"].as_f64())
                .ok_or_else(|| LlmError::Protocol("missing relevance_score".into()))?;
            *scores.get_mut(i).ok_or_else(|| LlmError::Protocol(format!("index {i} out of range")))? = s;
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(LlmError::Protocol("results do not cover every document".into()));
        }
        return Ok(scores);
    }
    Err(LlmError::Protocol("expected 'scores' or 'results'".into()))
}

//! Single-file TOML configuration: providers, artifact paths, pipeline and
//! server settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PipelineConfig;
use crate::corpus::Taxonomy;
use crate::demo::phrase_chat;
use crate::llm::{
    CassetteMode, CassetteTransport, ChatProvider, EmbeddingProvider, HashEmbedder, HttpChatClient,
    HttpEmbeddingClient, HttpRerankClient, LlmError, OverlapReranker, ProviderConfig, ProviderKind, RerankProvider,
    ReqwestTransport, StubChat, Transport,
};
use crate::prompting::{PromptTemplate, DEFAULT_TEMPLATE_VERSION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] LlmError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub paths: PathsConfig,
    pub providers: ProvidersConfig,
    pub pipeline: PipelineConfig,
    pub server: ServerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub knowledge_base: PathBuf,
    pub detector: PathBuf,
    /// Directory with prompt template files; built-in templates when absent.
    pub templates: Option<PathBuf>,
    pub template_version: String,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            knowledge_base: PathBuf::from("kb"),
            detector: PathBuf::from("detector.json"),
            templates: None,
            template_version: DEFAULT_TEMPLATE_VERSION.to_string(),
        }
    }
}

impl PathsConfig {
    pub fn template(&self) -> Result<PromptTemplate, ConfigError> {
        match &self.templates {
            None => Ok(PromptTemplate::default()),
            Some(dir) => PromptTemplate::load_dir(dir, &self.template_version)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderBackend {
    /// Deterministic offline stubs.
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StubChatMode {
    /// Repeats the labels of the first prompt example.
    #[default]
    FirstExample,
    /// Matches the synthetic corpus phrase banks.
    Phrase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubConfig {
    pub embedding_dim: usize,
    pub chat: StubChatMode,
    pub rerank: bool,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self { embedding_dim: 256, chat: StubChatMode::FirstExample, rerank: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteConfig {
    pub path: PathBuf,
    pub mode: CassetteMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub backend: ProviderBackend,
    pub stub: StubConfig,
    pub chat: Option<ProviderConfig>,
    pub embedding: Option<ProviderConfig>,
    pub rerank: Option<ProviderConfig>,
    pub cassette: Option<CassetteConfig>,
}

#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embedding: Arc<dyn EmbeddingProvider>,
    pub rerank: Option<Arc<dyn RerankProvider>>,
}

impl ProvidersConfig {
    /// Instantiates the configured providers.
    pub fn build(&self, taxonomy: &Taxonomy) -> Result<Providers, ConfigError> {
        match self.backend {
            ProviderBackend::Stub => {
                if self.stub.embedding_dim == 0 {
                    return Err(ConfigError::Invalid("stub.embedding_dim must be positive".into()));
                }
                let chat: Arc<dyn ChatProvider> = match self.stub.chat {
                    StubChatMode::FirstExample => Arc::new(StubChat::first_example()),
                    StubChatMode::Phrase => Arc::new(phrase_chat(taxonomy)),
                };
                Ok(Providers {
                    chat,
                    embedding: Arc::new(HashEmbedder::new(self.stub.embedding_dim)),
                    rerank: self.stub.rerank.then(|| Arc::new(OverlapReranker) as Arc<dyn RerankProvider>),
                })
            }
            ProviderBackend::Http => {
                let transport = self.transport()?;
                let need = |c: &Option<ProviderConfig>, name: &str| {
                    c.clone().ok_or_else(|| ConfigError::Invalid(format!("providers.{name} is required for the http backend")))
                };
                let mut chat_cfg = need(&self.chat, "chat")?;
                chat_cfg.kind = ProviderKind::Chat;
                let mut emb_cfg = need(&self.embedding, "embedding")?;
                emb_cfg.kind = ProviderKind::Embedding;
                let rerank = match &self.rerank {
                    Some(c) => {
                        let mut c = c.clone();
                        c.kind = ProviderKind::Rerank;
                        Some(Arc::new(HttpRerankClient::new(c, transport.clone())?) as Arc<dyn RerankProvider>)
                    }
                    None => None,
                };
                Ok(Providers {
                    chat: Arc::new(HttpChatClient::new(chat_cfg, transport.clone())?),
                    embedding: Arc::new(HttpEmbeddingClient::new(emb_cfg, transport)?),
                    rerank,
                })
            }
        }
    }

    fn transport(&self) -> Result<Arc<dyn Transport>, ConfigError> {
        let live: Arc<dyn Transport> = Arc::new(ReqwestTransport::new());
        let Some(c) = &self.cassette else { return Ok(live) };
        let io = |e: std::io::Error| ConfigError::Invalid(format!("cassette {}: {e}", c.path.display()));
        Ok(match c.mode {
            CassetteMode::Replay => Arc::new(CassetteTransport::replay(&c.path).map_err(io)?),
            CassetteMode::Record => Arc::new(CassetteTransport::record(&c.path, live).map_err(io)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Larger scan requests are processed as background jobs.
    pub sync_limit_bytes: usize,
    /// Requests above this size are rejected.
    pub max_content_bytes: usize,
    pub max_similar_cap: usize,
    pub job_ttl_secs: u64,
    /// Allowed CORS origins; a trailing `*` matches any suffix.
    pub allowed_origins: Vec<String>,
    /// Concurrent pipeline runs.
    pub workers: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8765,
            sync_limit_bytes: 200 * 1024,
            max_content_bytes: 5 * 1024 * 1024,
            max_similar_cap: 20,
            job_ttl_secs: 600,
            allowed_origins: vec![
                "chrome-extension://*".into(),
                "moz-extension://*".into(),
                "http://localhost*".into(),
                "http://127.0.0.1*".into(),
            ],
            workers: 2,
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.pipeline.retrieval;
        if r.top_k == 0 || r.candidates == 0 {
            return Err(ConfigError::Invalid("pipeline.retrieval candidates and top_k must be positive".into()));
        }
        if self.pipeline.concurrency == 0 || self.server.workers == 0 {
            return Err(ConfigError::Invalid("concurrency and workers must be at least 1".into()));
        }
        if self.server.sync_limit_bytes > self.server.max_content_bytes {
            return Err(ConfigError::Invalid("server.sync_limit_bytes exceeds max_content_bytes".into()));
        }
        for (name, c) in [("chat", &self.providers.chat), ("embedding", &self.providers.embedding), ("rerank", &self.providers.rerank)] {
            if let Some(c) = c {
                if c.timeout_secs <= 0.0 {
                    return Err(ConfigError::Invalid(format!("providers.{name}.timeout_secs must be positive")));
                }
            }
        }
        Ok(())
    }
}

//! Local HTTP API over the scan pipeline.
//!
//! Routes (all JSON):
//!
//! - `POST /api/v1/scan` scans a document; large documents become jobs
//! - `GET /api/v1/scan/{id}` polls a job
//! - `GET /api/v1/labels` lists the taxonomy (with an `ETag`)
//! - `GET /api/v1/similar?clause_text=..&k=..` retrieves annotated examples
//! - `GET /api/v1/health`

use std::collections::HashMap;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

use clausewatch::classify::{ContentType, FindingsReport, Pipeline, ScanOptions};
use clausewatch::config::ServerConfig;
use clausewatch::corpus::Category;
use clausewatch::retrieval::{RetrievalConfig, RetrievalMode};
use clausewatch::text::fnv1a64;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanRequestOptions {
    pub categories: Option<Vec<String>>,
    pub threshold: Option<f64>,
    pub include_similar: Option<bool>,
    pub max_similar: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRequest {
    pub content: String,
    #[serde(default = "default_content_type")]
    pub content_type: String,
    #[serde(default)]
    pub options: ScanRequestOptions,
}

fn default_content_type() -> String {
    "html".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
}

struct Job {
    status: JobStatus,
    finished: Option<Instant>,
    result: Option<Response<String>>,
}

pub struct AppState {
    pipeline: Arc<Pipeline>,
    config: ServerConfig,
    jobs: Mutex<HashMap<Uuid, Job>>,
    workers: Arc<Semaphore>,
    labels_body: String,
    labels_etag: String,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>, config: ServerConfig) -> Arc<Self> {
        let labels = pipeline.taxonomy().labels();
        let labels_body = serde_json::to_string(&json!({ "count": labels.len(), "labels": labels }))
            .expect("taxonomy serializes");
        let labels_etag = format!("\"{:016x}\"", fnv1a64(labels_body.as_bytes()));
        Arc::new(Self {
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            pipeline,
            config,
            jobs: Mutex::new(HashMap::new()),
            labels_body,
            labels_etag,
        })
    }
}

/// JSON error body `{"error": {"code", "message", "field"?}}`.
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<&'static str>,
}

impl ApiError {
    fn bad_request(field: Option<&'static str>, message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "invalid_request", message: message.into(), field }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(f) = self.field {
            err["field"] = Value::from(f);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

fn json_response(status: StatusCode, body: String) -> Response<String> {
    let mut r = Response::new(body);
    *r.status_mut() = status;
    r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_content_bytes.saturating_mul(2).saturating_add(64 * 1024);
    let cors = cors_layer(&state.config.allowed_origins);
    Router::new()
        .route(&format!("{API_PREFIX}/scan"), post(scan))
        .route(&format!("{API_PREFIX}/scan/{{id}}"), get(scan_job))
        .route(&format!("{API_PREFIX}/labels"), get(labels))
        .route(&format!("{API_PREFIX}/similar"), get(similar))
        .route(&format!("{API_PREFIX}/health"), get(health))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

fn origin_allowed(patterns: &[String], origin: &str) -> bool {
    patterns.iter().any(|p| match p.strip_suffix('*') {
        Some(prefix) => origin.starts_with(prefix),
        None => origin == p,
    })
}

fn cors_layer(patterns: &[String]) -> CorsLayer {
    let patterns = patterns.to_vec();
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(move |origin, _| {
            origin.to_str().map(|o| origin_allowed(&patterns, o)).unwrap_or(false)
        }))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::IF_NONE_MATCH])
        .expose_headers([header::ETAG])
}

fn parse_scan(state: &AppState, body: &[u8]) -> Result<(ScanRequest, ContentType, ScanOptions), ApiError> {
    let req: ScanRequest =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request(None, format!("malformed request: {e}")))?;
    let content_type = ContentType::from_str(&req.content_type).map_err(|m| ApiError::bad_request(Some("content_type"), m))?;
    if req.content.trim().is_empty() {
        return Err(ApiError::bad_request(Some("content"), "content must not be empty"));
    }
    if req.content.len() > state.config.max_content_bytes {
        return Err(ApiError {
            status: StatusCode::PAYLOAD_TOO_LARGE,
            code: "content_too_large",
            message: format!("content is {} bytes, limit is {}", req.content.len(), state.config.max_content_bytes),
            field: Some("content"),
        });
    }
    let o = &req.options;
    let categories = match &o.categories {
        None => None,
        Some(list) => Some(
            list.iter()
                .map(|c| Category::from_str(c).map_err(|e| ApiError::bad_request(Some("options.categories"), e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    if o.threshold.is_some_and(|t| !t.is_finite()) {
        return Err(ApiError::bad_request(Some("options.threshold"), "threshold must be finite"));
    }
    if let Some(m) = o.max_similar {
        if m > state.config.max_similar_cap {
            return Err(ApiError::bad_request(
                Some("options.max_similar"),
                format!("max_similar {m} exceeds the cap of {}", state.config.max_similar_cap),
            ));
        }
    }
    let options = ScanOptions {
        categories,
        threshold: o.threshold,
        include_similar: o.include_similar.unwrap_or(true),
        max_similar: o.max_similar,
    };
    Ok((req, content_type, options))
}

/// 503 when every attempted category failed (providers unreachable), with
/// the partial report attached; 200 otherwise.
fn scan_response(report: &FindingsReport) -> Response<String> {
    let results: Vec<_> = report.findings.iter().flat_map(|f| &f.categories).collect();
    if !results.is_empty() && results.iter().all(|c| c.error.is_some()) {
        let body = json!({
            "error": { "code": "providers_unavailable", "message": "no classification succeeded" },
            "partial": report,
        });
        return json_response(StatusCode::SERVICE_UNAVAILABLE, body.to_string());
    }
    json_response(StatusCode::OK, serde_json::to_string(report).expect("report serializes"))
}

async fn run_scan(state: Arc<AppState>, content: String, content_type: ContentType, options: ScanOptions) -> Response<String> {
    let _permit = state.workers.clone().acquire_owned().await.expect("semaphore is never closed");
    let pipeline = state.pipeline.clone();
    match tokio::task::spawn_blocking(move || pipeline.scan(&content, content_type, &options)).await {
        Ok(outcome) => scan_response(&outcome.report),
        Err(e) => {
            log::error!("scan worker failed: {e}");
            let body = json!({ "error": { "code": "internal", "message": "scan worker failed" } });
            json_response(StatusCode::INTERNAL_SERVER_ERROR, body.to_string())
        }
    }
}

async fn scan(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let (req, content_type, options) = match parse_scan(&state, &body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    if req.content.len() <= state.config.sync_limit_bytes {
        return run_scan(state, req.content, content_type, options).await.into_response();
    }
    purge_jobs(&state);
    let id = Uuid::new_v4();
    state.jobs.lock().expect("job store").insert(id, Job { status: JobStatus::Pending, finished: None, result: None });
    let bg = state.clone();
    tokio::spawn(async move {
        let resp = run_scan(bg.clone(), req.content, content_type, options).await;
        if let Some(job) = bg.jobs.lock().expect("job store").get_mut(&id) {
            job.status = JobStatus::Done;
            job.finished = Some(Instant::now());
            job.result = Some(resp);
        }
    });
    let body = json!({ "job_id": id, "status": JobStatus::Pending, "poll": format!("{API_PREFIX}/scan/{id}") });
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

fn purge_jobs(state: &AppState) {
    let ttl = Duration::from_secs(state.config.job_ttl_secs);
    state.jobs.lock().expect("job store").retain(|_, j| j.finished.map_or(true, |t| t.elapsed() < ttl));
}

async fn scan_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    purge_jobs(&state);
    let Ok(id) = Uuid::parse_str(&id) else {
        return ApiError::bad_request(Some("id"), "job id is not a UUID").into_response();
    };
    let jobs = state.jobs.lock().expect("job store");
    let Some(job) = jobs.get(&id) else {
        return ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: format!("no job {id}"), field: None }
            .into_response();
    };
    match &job.result {
        None => (StatusCode::OK, Json(json!({ "job_id": id, "status": job.status }))).into_response(),
        Some(r) => {
            let result: Value = serde_json::from_str(r.body()).unwrap_or(Value::Null);
            let body = json!({ "job_id": id, "status": job.status, "http_status": r.status().as_u16(), "result": result });
            (StatusCode::OK, Json(body)).into_response()
        }
    }
}

async fn labels(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let etag = HeaderValue::from_str(&state.labels_etag).expect("etag is ascii");
    if headers.get(header::IF_NONE_MATCH).is_some_and(|v| v == etag) {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response();
    }
    let mut r = json_response(StatusCode::OK, state.labels_body.clone());
    r.headers_mut().insert(header::ETAG, etag);
    r.into_response()
}

async fn similar(State(state): State<Arc<AppState>>, Query(params): Query<HashMap<String, String>>) -> Response {
    let text = params.get("clause_text").map(|s| s.trim().to_string()).unwrap_or_default();
    if text.is_empty() {
        return ApiError::bad_request(Some("clause_text"), "clause_text must not be empty").into_response();
    }
    let k = match params.get("k").map(|s| s.parse::<usize>()) {
        None => clausewatch::retrieval::DEFAULT_TOP_K,
        Some(Ok(k)) => k,
        Some(Err(_)) => return ApiError::bad_request(Some("k"), "k must be a positive integer").into_response(),
    };
    if k == 0 || k > state.config.max_similar_cap {
        return ApiError::bad_request(Some("k"), format!("k must be in 1..={}", state.config.max_similar_cap))
            .into_response();
    }
    let _permit = state.workers.clone().acquire_owned().await.expect("semaphore is never closed");
    let pipeline = state.pipeline.clone();
    let query = text.clone();
    let result = tokio::task::spawn_blocking(move || {
        let config = RetrievalConfig { mode: RetrievalMode::Hybrid, top_k: k, ..pipeline.config().retrieval.clone() };
        pipeline.knowledge_base().retrieve(&query, pipeline.embedder(), pipeline.reranker(), &config, None)
    })
    .await;
    match result {
        Ok(Ok(r)) => (StatusCode::OK, Json(json!({ "clause_text": text, "k": k, "examples": r.examples }))).into_response(),
        Ok(Err(e)) => ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "retrieval_failed",
            message: e.to_string(),
            field: None,
        }
        .into_response(),
        Err(_) => ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: "retrieval worker failed".into(),
            field: None,
        }
        .into_response(),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "knowledge_base_size": state.pipeline.knowledge_base().len(),
        "labels": state.pipeline.taxonomy().len(),
    }))
    .into_response()
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let addr: SocketAddr = format!("{}:{}", state.config.host, state.config.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

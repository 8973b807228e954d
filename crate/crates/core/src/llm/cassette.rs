use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{HttpResponse, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Forward to the inner transport and append every exchange.
    Record,
    /// Serve recorded responses only; unknown requests fail.
    Replay,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    url: String,
    request: Value,
    status: u16,
    response: String,
}

/// Request hash: SHA-256 over the URL and the JSON body. Headers (and thus
/// API keys) never enter the key or the file.
pub fn cassette_key(url: &str, body: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update(b"\n");
    hasher.update(body.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

/// Record/replay wrapper around a transport, backed by a JSONL file.
pub struct CassetteTransport {
    mode: CassetteMode,
    path: PathBuf,
    inner: Option<Arc<dyn Transport>>,
    entries: Mutex<HashMap<String, HttpResponse>>,
}

impl CassetteTransport {
    pub fn replay(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Self::open(CassetteMode::Replay, path, None)
    }

    pub fn record(path: impl AsRef<Path>, inner: Arc<dyn Transport>) -> std::io::Result<Self> {
        Self::open(CassetteMode::Record, path, Some(inner))
    }

    fn open(mode: CassetteMode, path: impl AsRef<Path>, inner: Option<Arc<dyn Transport>>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: Entry = serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                entries.insert(e.key, HttpResponse { status: e.status, body: e.response });
            }
        } else if mode == CassetteMode::Replay {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cassette {} not found", path.display()),
            ));
        }
        Ok(Self { mode, path, inner, entries: Mutex::new(entries) })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Transport for CassetteTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let key = cassette_key(url, body);
        if let Some(hit) = self.entries.lock().expect("cassette poisoned").get(&key) {
            return Ok(hit.clone());
        }
        match (self.mode, &self.inner) {
            (CassetteMode::Record, Some(inner)) => {
                let resp = inner.post_json(url, headers, body, timeout)?;
                let entry = Entry {
                    key: key.clone(),
                    url: url.to_string(),
                    request: body.clone(),
                    status: resp.status,
                    response: resp.body.clone(),
                };
                let mut entries = self.entries.lock().expect("cassette poisoned");
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(|e| TransportError(format!("cassette write: {e}")))?;
                let line = serde_json::to_string(&entry).expect("entry serializes");
                writeln!(file, "{line}").map_err(|e| TransportError(format!("cassette write: {e}")))?;
                entries.insert(key, resp.clone());
                Ok(resp)
            }
            _ => Err(TransportError(format!("cassette miss for request {key}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedTransport;
    use serde_json::json;

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        let inner = Arc::new(ScriptedTransport::new(vec![Ok(HttpResponse::ok("{\"a\":1}"))]));
        let headers = vec![("Authorization".to_string(), "Bearer secret".to_string())];
        let body = json!({"model": "m", "input": ["x"]});

        let rec = CassetteTransport::record(&path, inner.clone()).unwrap();
        let first = rec.post_json("http://e/embeddings", &headers, &body, Duration::from_secs(1)).unwrap();
        // Second identical request is served from memory.
        rec.post_json("http://e/embeddings", &headers, &body, Duration::from_secs(1)).unwrap();
        assert_eq!(inner.requests().len(), 1);

        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(!raw.contains("secret"));

        let replay = CassetteTransport::replay(&path).unwrap();
        assert_eq!(replay.len(), 1);
        let again = replay.post_json("http://e/embeddings", &[], &body, Duration::from_secs(1)).unwrap();
        assert_eq!(again, first);
        let miss = replay.post_json("http://e/embeddings", &[], &json!({}), Duration::from_secs(1));
        assert!(miss.is_err());
    }

    #[test]
    fn replay_requires_existing_file() {
        assert!(CassetteTransport::replay("/nonexistent/cassette.jsonl").is_err());
    }
}

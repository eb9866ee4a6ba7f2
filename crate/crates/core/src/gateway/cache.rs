//! Append-only response cache keyed by request fingerprint.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::message::{ChatRequest, Fingerprint};
use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub model: String,
    pub messages: usize,
    pub temperature: f64,
    pub structured: bool,
}

impl From<&ChatRequest> for RequestSummary {
    fn from(r: &ChatRequest) -> Self {
        RequestSummary {
            model: r.model.clone(),
            messages: r.messages.len(),
            temperature: r.temperature,
            structured: r.response_schema.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedExchange {
    pub request_fingerprint: Fingerprint,
    pub run_id: String,
    pub request: RequestSummary,
    /// Body of the successful HTTP response, verbatim.
    pub raw_response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// In-memory index over one or more cache files plus a single serialized
/// writer appending to the active file.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<Fingerprint, CachedExchange>>,
    writer: Mutex<Option<(PathBuf, BufWriter<File>)>>,
}

impl ResponseCache {
    /// A cache that keeps exchanges in memory only.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new exchanges to it.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let cache = Self::default();
        if path.exists() {
            cache.load(path)?;
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        *cache.writer.lock().expect("cache writer poisoned") = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(cache)
    }

    /// Adds the entries of another cache file to the index (read-only).
    pub fn load(&self, path: &Path) -> Result<usize, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        let mut entries = self.entries.write().expect("cache index poisoned");
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ex: CachedExchange = serde_json::from_str(line)
                .map_err(|e| GatewayError::Cache(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.entry(ex.request_fingerprint.clone()).or_insert(ex);
            n += 1;
        }
        Ok(n)
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<CachedExchange> {
        self.entries.read().expect("cache index poisoned").get(fp).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an exchange; the first response stored for a fingerprint wins.
    pub fn insert(&self, req: &ChatRequest, fp: Fingerprint, raw_response: String, run_id: &str) -> Result<(), GatewayError> {
        let ex = CachedExchange {
            request_fingerprint: fp.clone(),
            run_id: run_id.to_string(),
            request: RequestSummary::from(req),
            raw_response,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        {
            let mut entries = self.entries.write().expect("cache index poisoned");
            if entries.contains_key(&fp) {
                return Ok(());
            }
            entries.insert(fp, ex.clone());
        }
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        if let Some((path, w)) = writer.as_mut() {
            let line = serde_json::to_string(&ex).expect("in-memory serialization");
            w.write_all(line.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
                .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c/cache.jsonl");
        let req = ChatRequest::new("m", vec![ChatMessage::user("hi")]);
        let fp = req.fingerprint();
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(&req, fp.clone(), "body-1".into(), "run").unwrap();
            c.insert(&req, fp.clone(), "body-2".into(), "run").unwrap();
            assert_eq!(c.get(&fp).unwrap().raw_response, "body-1");
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);

        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.get(&fp).unwrap().raw_response, "body-1");
        assert!(c.get(&Fingerprint("nope".into())).is_none());
    }
}

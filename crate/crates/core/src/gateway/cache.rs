//! Append-only JSON-lines call cache keyed by a content hash of
//! `(backend kind, model id, canonical request)`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EntailmentVerdict, GatewayError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Llm,
    Entailment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachedValue {
    Completion(String),
    Verdict(EntailmentVerdict),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallCacheEntry {
    pub key: String,
    pub kind: CallKind,
    pub response: CachedValue,
    pub timestamp: u64,
}

pub fn cache_key(kind: CallKind, model_id: &str, canonical_request: &serde_json::Value) -> String {
    // serde_json maps are ordered, so this rendering is canonical
    let material = serde_json::json!([kind, model_id, canonical_request]).to_string();
    hex::encode(Sha256::digest(material.as_bytes()))
}

pub struct CallCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CachedValue>>,
    writer: Mutex<Option<File>>,
}

impl CallCache {
    pub fn in_memory() -> Self {
        CallCache { path: None, entries: RwLock::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Loads every entry of an existing file (if any) and opens it for
    /// appending. Later duplicates of a key are ignored.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let err = |message: String| GatewayError::Cache { path: path.display().to_string(), message };
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| err(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CallCacheEntry =
                    serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
                entries.entry(entry.key).or_insert(entry.response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| err(e.to_string()))?;
        Ok(CallCache { path: Some(path), entries: RwLock::new(entries), writer: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CachedValue> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a response unless the key is already present.
    pub fn put(&self, key: &str, kind: CallKind, response: CachedValue) -> Result<()> {
        {
            let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
            if entries.contains_key(key) {
                return Ok(());
            }
            entries.insert(key.to_string(), response.clone());
        }
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = writer.as_mut() {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let entry = CallCacheEntry { key: key.to_string(), kind, response, timestamp };
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|e| GatewayError::Cache {
                path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, ChatRequest, ClientError};

/// One cached reply. Stored one JSON object per line.
///
/// `digest` is SHA-256 over `key`, a newline and `reply`; it lets a replay
/// detect an edited reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub reply: String,
    pub created_at: u64,
    pub digest: String,
}

impl CacheEntry {
    pub fn new(key: String, reply: String) -> Self {
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let digest = entry_digest(&key, &reply);
        CacheEntry {
            key,
            reply,
            created_at,
            digest,
        }
    }

    pub fn verify(&self) -> Result<(), ClientError> {
        if entry_digest(&self.key, &self.reply) != self.digest {
            return Err(ClientError::DigestMismatch { key: self.key.clone() });
        }
        Ok(())
    }
}

fn entry_digest(key: &str, reply: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(key.as_bytes());
    hasher.update(b"\n");
    hasher.update(reply.as_bytes());
    hex::encode(hasher.finalize())
}

/// Parses a cache file. A final line without its newline is the remnant of
/// an interrupted append and is skipped; `torn` reports its byte offset.
pub(crate) fn read_entries(path: &Path) -> Result<(HashMap<String, CacheEntry>, Option<u64>), ClientError> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text).map_err(|e| ClientError::Cache {
                entry: path.display().to_string(),
                reason: e.to_string(),
            })?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((HashMap::new(), None)),
        Err(e) => {
            return Err(ClientError::Cache {
                entry: path.display().to_string(),
                reason: e.to_string(),
            })
        }
    }
    let mut entries = HashMap::new();
    let mut offset = 0u64;
    let mut torn = None;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        let complete = chunk.ends_with('\n');
        let line = chunk.trim_end_matches(['\n', '\r']);
        if !line.trim().is_empty() {
            match serde_json::from_str::<CacheEntry>(line) {
                Ok(entry) => {
                    entry.verify()?;
                    entries.insert(entry.key.clone(), entry);
                }
                Err(_) if !complete => torn = Some(offset),
                Err(e) => {
                    return Err(ClientError::Cache {
                        entry: format!("{}:{}", path.display(), i + 1),
                        reason: e.to_string(),
                    })
                }
            }
        }
        offset += chunk.len() as u64;
    }
    Ok((entries, torn))
}

/// Persistent reply cache, append-only on disk.
///
/// Readers share an in-memory index; writers are serialized and each entry
/// reaches the file as a single `write_all` of one complete line.
pub struct ResponseCache {
    path: PathBuf,
    entries: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<File>,
}

impl ResponseCache {
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        let (entries, torn) = read_entries(path)?;
        let cache_err = |e: std::io::Error| ClientError::Cache {
            entry: path.display().to_string(),
            reason: e.to_string(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(cache_err)?;
        }
        if let Some(offset) = torn {
            OpenOptions::new()
                .write(true)
                .open(path)
                .and_then(|f| f.set_len(offset))
                .map_err(cache_err)?;
        }
        let writer = OpenOptions::new().create(true).append(true).open(path).map_err(cache_err)?;
        Ok(ResponseCache {
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).map(|e| e.reply.clone())
    }

    pub fn insert(&self, key: String, reply: String) -> Result<(), ClientError> {
        let entry = CacheEntry::new(key, reply);
        let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
        line.push('\n');
        let mut writer = self.writer.lock().expect("cache writer lock");
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .and_then(|_| writer.sync_data())
            .map_err(|e| ClientError::Cache {
                entry: self.path.display().to_string(),
                reason: e.to_string(),
            })?;
        self.entries.write().expect("cache lock").insert(entry.key.clone(), entry);
        Ok(())
    }
}

/// Serves repeated requests from a [`ResponseCache`], delegating misses.
pub struct CachedBackend<B> {
    inner: B,
    cache: std::sync::Arc<ResponseCache>,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: std::sync::Arc<ResponseCache>) -> Self {
        CachedBackend { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        let key = request.digest();
        if let Some(reply) = self.cache.get(&key) {
            return Ok(reply);
        }
        let reply = self.inner.send(request)?;
        self.cache.insert(key, reply.clone())?;
        Ok(reply)
    }
}

//! Model backends.
//!
//! A [`Backend`] turns a [`ChatRequest`] into reply text. The HTTP backend
//! talks to any chat-completions-compatible endpoint; [`CachedBackend`]
//! persists replies keyed by request digest; [`ReplayBackend`] answers only
//! from such a cache file and never touches the network.

mod batch;
mod cache;
mod http;
mod replay;
mod scripted;

pub use batch::{par_map, run_batch};
pub use cache::{CacheEntry, CachedBackend, ResponseCache};
pub use http::{HttpBackend, ReqwestTransport, Transport, TransportError};
pub use replay::ReplayBackend;
pub use scripted::ScriptedBackend;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempt(s): {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[error("audio {path}: {reason}")]
    Audio { path: String, reason: String },
    #[error("cache error at {entry}: {reason}")]
    Cache { entry: String, reason: String },
    #[error("cache entry {key} failed its integrity digest")]
    DigestMismatch { key: String },
    #[error("request {digest} is not in the recording")]
    ReplayMiss { digest: String },
    #[error("{0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudioTransport {
    #[default]
    #[serde(rename = "base64-inline")]
    Base64Inline,
    #[serde(rename = "path-passthrough")]
    PathPassthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint_url: String,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    pub model_name: String,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "defaults::max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "defaults::timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub audio_transport: AudioTransport,
    /// Minimum spacing between request starts; 0 disables rate limiting.
    #[serde(default)]
    pub min_request_interval_ms: u64,
}

mod defaults {
    pub fn max_retries() -> u32 {
        3
    }
    pub fn backoff_base_ms() -> u64 {
        500
    }
    pub fn max_concurrency() -> usize {
        4
    }
    pub fn timeout_ms() -> u64 {
        120_000
    }
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            auth_token_env: None,
            model_name: model_name.into(),
            max_retries: defaults::max_retries(),
            backoff_base_ms: defaults::backoff_base_ms(),
            max_concurrency: defaults::max_concurrency(),
            timeout_ms: defaults::timeout_ms(),
            audio_transport: AudioTransport::default(),
            min_request_interval_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_concurrency == 0 {
            return Err(ClientError::Config("max_concurrency must be at least 1".into()));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(ClientError::Config("endpoint_url is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub text: String,
    pub audio_ref: Option<String>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>, audio_ref: Option<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            text: text.into(),
            audio_ref,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn one() -> f64 {
    1.0
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            top_p: 1.0,
            seed: None,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub decode: DecodeParams,
}

impl ChatRequest {
    pub fn single(model_name: impl Into<String>, text: impl Into<String>, audio_ref: Option<String>, decode: DecodeParams) -> Self {
        ChatRequest {
            model_name: model_name.into(),
            messages: vec![ChatMessage::user(text, audio_ref)],
            decode,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest("no messages".into()));
        }
        let audio = self.messages.iter().filter(|m| m.audio_ref.is_some()).count();
        if audio > 1 {
            return Err(ClientError::InvalidRequest(format!(
                "{audio} audio attachments, at most one allowed"
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding of the whole request.
    /// Decode parameters (including the seed) are part of the key.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub trait Backend: Send + Sync {
    /// Model name placed into every request built for this backend.
    fn model_name(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).send(request)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).send(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).send(request)
    }
}

/// Backend selection as written in a backend config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Http(BackendConfig),
    Replay { recording: PathBuf, model_name: String },
}

/// Backend config file: the backend plus default decoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendFile {
    pub backend: BackendSpec,
    #[serde(default)]
    pub decode: DecodeParams,
}

impl BackendFile {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let mut file: BackendFile = serde_json::from_str(&text).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        // Relative recordings are resolved against the config file.
        if let BackendSpec::Replay { recording, .. } = &mut file.backend {
            if recording.is_relative() {
                if let Some(dir) = path.parent() {
                    *recording = dir.join(&*recording);
                }
            }
        }
        Ok(file)
    }

    pub fn max_concurrency(&self) -> usize {
        match &self.backend {
            BackendSpec::Http(c) => c.max_concurrency,
            BackendSpec::Replay { .. } => 1,
        }
    }
}

/// Builds the backend a spec describes. An HTTP backend is wrapped in the
/// given persistent cache; a replay backend never needs one.
pub fn connect(spec: &BackendSpec, cache: Option<Arc<ResponseCache>>) -> Result<Arc<dyn Backend>, ClientError> {
    match spec {
        BackendSpec::Http(config) => {
            let http = HttpBackend::from_config(config.clone())?;
            match cache {
                Some(cache) => Ok(Arc::new(CachedBackend::new(http, cache))),
                None => Ok(Arc::new(http)),
            }
        }
        BackendSpec::Replay { recording, model_name } => Ok(Arc::new(ReplayBackend::open(recording, model_name.clone())?)),
    }
}

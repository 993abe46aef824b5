use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{AudioTransport, Backend, BackendConfig, ChatRequest, ClientError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

/// Raw HTTP POST of a JSON body. Returns status and response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<(u16, String), TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ClientError::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<(u16, String), TransportError> {
        let mut builder = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(token) = bearer {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| TransportError(e.to_string()))?;
        Ok((status, text))
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 300;
    match body.char_indices().nth(LIMIT) {
        Some((idx, _)) => format!("{}…", &body[..idx]),
        None => body.to_string(),
    }
}

/// Chat-completions client with retries, request spacing and a hard bound
/// on in-flight requests.
pub struct HttpBackend {
    config: BackendConfig,
    token: Option<String>,
    transport: Arc<dyn Transport>,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
    next_start: Mutex<Option<Instant>>,
}

impl HttpBackend {
    pub fn from_config(config: BackendConfig) -> Result<Self, ClientError> {
        Self::with_transport(config, Arc::new(ReqwestTransport::new()?))
    }

    /// Fails before any network I/O when the configured auth variable is unset.
    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, ClientError> {
        config.validate()?;
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::Config(format!("auth token variable {var} is not set")))?),
            None => None,
        };
        Ok(HttpBackend {
            config,
            token,
            transport,
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
            next_start: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("in-flight lock");
        while *n >= self.config.max_concurrency {
            n = self.slot_free.wait(n).expect("in-flight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock") -= 1;
        self.slot_free.notify_one();
    }

    fn pace(&self) {
        if self.config.min_request_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_request_interval_ms);
        let wait = {
            let mut next = self.next_start.lock().expect("rate lock");
            let now = Instant::now();
            let start = next.map_or(now, |t| t.max(now));
            *next = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    pub fn request_body(&self, request: &ChatRequest) -> Result<Value, ClientError> {
        let mut messages = Vec::with_capacity(request.messages.len());
        for m in &request.messages {
            let mut content = Vec::new();
            if let Some(audio) = &m.audio_ref {
                content.push(match self.config.audio_transport {
                    AudioTransport::Base64Inline => {
                        let bytes = std::fs::read(audio).map_err(|e| ClientError::Audio {
                            path: audio.clone(),
                            reason: e.to_string(),
                        })?;
                        let format = Path::new(audio)
                            .extension()
                            .and_then(|e| e.to_str())
                            .unwrap_or("wav")
                            .to_ascii_lowercase();
                        json!({
                            "type": "input_audio",
                            "input_audio": {
                                "data": base64::engine::general_purpose::STANDARD.encode(bytes),
                                "format": format,
                            }
                        })
                    }
                    AudioTransport::PathPassthrough => json!({"type": "audio_url", "audio_url": {"url": audio}}),
                });
            }
            content.push(json!({"type": "text", "text": m.text}));
            messages.push(json!({"role": m.role, "content": content}));
        }
        let mut body = json!({
            "model": request.model_name,
            "messages": messages,
            "temperature": request.decode.temperature,
            "top_p": request.decode.top_p,
        });
        if let Some(seed) = request.decode.seed {
            body["seed"] = json!(seed);
        }
        if let Some(max_tokens) = request.decode.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        Ok(body)
    }

    fn attempt_loop(&self, body: &Value) -> Result<String, ClientError> {
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let mut attempt: u32 = 0;
        loop {
            self.pace();
            let last = match self
                .transport
                .post_json(&self.config.endpoint_url, self.token.as_deref(), body, timeout)
            {
                Ok((status, text)) if (200..300).contains(&status) => return parse_reply(&text),
                Ok((status, text)) if !retryable(status) => {
                    return Err(ClientError::Http {
                        status,
                        body: excerpt(&text),
                    })
                }
                Ok((status, text)) => format!("HTTP {status}: {}", excerpt(&text)),
                Err(TransportError(e)) => e,
            };
            if attempt >= self.config.max_retries {
                return Err(ClientError::ExhaustedRetries {
                    attempts: attempt + 1,
                    last,
                });
            }
            let backoff = self.config.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
            std::thread::sleep(Duration::from_millis(backoff));
            attempt += 1;
        }
    }
}

/// Extracts `choices[0].message.content` (string or array of text parts).
pub(crate) fn parse_reply(text: &str) -> Result<String, ClientError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ClientError::Response(format!("{e}: {}", excerpt(text))))?;
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| ClientError::Response(format!("no choices[0].message.content in {}", excerpt(text))))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(ClientError::Response(format!("unexpected content {other}"))),
    }
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        let body = self.request_body(request)?;
        self.acquire();
        let result = self.attempt_loop(&body);
        self.release();
        result
    }
}

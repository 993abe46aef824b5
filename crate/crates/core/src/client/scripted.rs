use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Backend, ChatRequest, ClientError};

type Responder = dyn Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync;

/// In-process backend driven by a closure. Counts and logs every call, so
/// it doubles as the "network" behind caches in tests and fixture builders.
pub struct ScriptedBackend {
    model_name: String,
    responder: Box<Responder>,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<F>(model_name: impl Into<String>, responder: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync + 'static,
    {
        ScriptedBackend {
            model_name: model_name.into(),
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replies `"echo: <text of last message>"`.
    pub fn echo(model_name: impl Into<String>) -> Self {
        Self::new(model_name, |req| {
            Ok(format!("echo: {}", req.messages.last().map(|m| m.text.as_str()).unwrap_or("")))
        })
    }

    /// Replies with `replies` in call order; errors once exhausted.
    pub fn sequence(model_name: impl Into<String>, replies: Vec<String>) -> Self {
        let next = AtomicUsize::new(0);
        Self::new(model_name, move |_| {
            let i = next.fetch_add(1, Ordering::SeqCst);
            replies
                .get(i)
                .cloned()
                .ok_or_else(|| ClientError::Backend(format!("script exhausted at call {i}")))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Request digests in the order calls arrived.
    pub fn log(&self) -> Vec<String> {
        self.log.lock().expect("log lock").clone()
    }
}

impl Backend for ScriptedBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(request.digest());
        (self.responder)(request)
    }
}

use std::collections::HashMap;
use std::path::Path;

use super::cache::read_entries;
use super::{Backend, ChatRequest, ClientError};

/// Answers strictly from a recorded cache file. A miss is an error, never a
/// network call.
pub struct ReplayBackend {
    model_name: String,
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn open(recording: &Path, model_name: impl Into<String>) -> Result<Self, ClientError> {
        if !recording.exists() {
            return Err(ClientError::Config(format!("recording {} does not exist", recording.display())));
        }
        let (entries, _) = read_entries(recording)?;
        Ok(ReplayBackend {
            model_name: model_name.into(),
            entries: entries.into_iter().map(|(k, e)| (k, e.reply)).collect(),
        })
    }

    pub fn from_entries(model_name: impl Into<String>, entries: HashMap<String, String>) -> Self {
        ReplayBackend {
            model_name: model_name.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        let digest = request.digest();
        self.entries.get(&digest).cloned().ok_or(ClientError::ReplayMiss { digest })
    }
}

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{CliError, GlobalArgs};
use crate::dataset::Modality;
use crate::metrics::OutcomeLabel;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub(crate) fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, &row).expect("row serializes");
        out.push(b'\n');
    }
    out
}

pub(crate) fn pretty_json(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

pub(crate) fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One line of `outcomes.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub id: String,
    pub modality: Modality,
    pub raw: String,
    pub normalized: String,
    pub outcome: OutcomeLabel,
}

pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| CliError::Ingestion(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Ingestion(format!("{}: no outcomes", path.display())));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

/// Provenance for one command invocation, written as `manifest.json`.
///
/// The digest covers everything except `timestamp`, so reruns over the same
/// inputs reproduce it. The timestamp honours `SOURCE_DATE_EPOCH`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub benchmark: Option<String>,
    pub pipeline: Option<String>,
    pub backend_config: Option<String>,
    pub normalizer: Option<String>,
    pub output_dir: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputRef>,
    pub tool_version: String,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, global: &GlobalArgs) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        RunManifest {
            command: command.to_string(),
            benchmark: None,
            pipeline: None,
            backend_config: global.backend_config.as_ref().map(|p| p.display().to_string()),
            normalizer: None,
            output_dir: global.out.display().to_string(),
            seed: global.seed,
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    /// Records an input file with its content hash.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<&mut Self, CliError> {
        let sha256 = file_sha256(path)?;
        self.inputs.insert(
            role.to_string(),
            InputRef {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(self)
    }

    pub fn digest(&self) -> String {
        let mut stable = self.clone();
        stable.timestamp = 0;
        hex::encode(Sha256::digest(serde_json::to_vec(&stable).expect("manifest serializes")))
    }

    pub fn write(&self, out_dir: &Path) -> Result<String, CliError> {
        let digest = self.digest();
        let mut value = serde_json::to_value(self).expect("manifest serializes");
        if let Value::Object(map) = &mut value {
            map.insert("digest".into(), Value::String(digest.clone()));
        }
        write_atomic(&out_dir.join("manifest.json"), &pretty_json(&value))?;
        Ok(digest)
    }
}

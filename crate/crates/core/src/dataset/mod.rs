//! Benchmark ingestion and model-specific IDK dataset construction.

mod collect;
mod idk;

pub use collect::{collect_samples, CollectError, SamplingConfig};
pub use idk::{build_idk_dataset, export_sft, idk_curve, import_sft, IdkDataset, IdkRecord, IdkThreshold, SampleSet, SftRecord};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Ingestion { line: usize, reason: String },
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("modality counts {found:?} differ from declared {declared:?}")]
    DeclaredCounts {
        declared: BTreeMap<Modality, usize>,
        found: BTreeMap<Modality, usize>,
    },
    #[error("no samples for question(s) {0:?}")]
    MissingSamples(Vec<String>),
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sft record {line}: {reason}")]
    Sft { line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("export failed: {0}")]
    Export(#[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Sound,
    Music,
    Speech,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Sound, Modality::Music, Modality::Speech];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Sound => "sound",
            Modality::Music => "music",
            Modality::Speech => "speech",
        }
    }

    /// Capitalized name as it appears in prompts ("Sound", "Music", "Speech").
    pub fn title(self) -> &'static str {
        match self {
            Modality::Sound => "Sound",
            Modality::Music => "Music",
            Modality::Speech => "Speech",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sound" => Ok(Modality::Sound),
            "music" => Ok(Modality::Music),
            "speech" => Ok(Modality::Speech),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

/// One multiple-choice benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub audio_ref: String,
    pub question: String,
    pub choices: [String; 4],
    pub gold: String,
    pub modality: Modality,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("record {:?}: empty question", self.id));
        }
        let mut seen = HashSet::new();
        for choice in &self.choices {
            let trimmed = choice.trim();
            if trimmed.is_empty() {
                return Err(format!("record {:?}: empty choice", self.id));
            }
            if choice.contains('\n') || choice.contains('\r') {
                return Err(format!("record {:?}: choice {choice:?} contains a line break", self.id));
            }
            if !seen.insert(trimmed) {
                return Err(format!("record {:?}: duplicate choice {trimmed:?}", self.id));
            }
        }
        if !self.choices.iter().any(|c| c.trim() == self.gold.trim()) {
            return Err(format!("record {:?}: answer {:?} is not among the choices", self.id, self.gold));
        }
        Ok(())
    }
}

/// Validated benchmark in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkSet {
    records: Vec<QuestionRecord>,
}

impl BenchmarkSet {
    pub fn new(records: Vec<QuestionRecord>) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyBenchmark);
        }
        let mut ids = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate().map_err(|reason| DatasetError::Ingestion { line: i + 1, reason })?;
            if !ids.insert(r.id.as_str()) {
                return Err(DatasetError::Ingestion {
                    line: i + 1,
                    reason: format!("duplicate id {:?}", r.id),
                });
            }
        }
        Ok(BenchmarkSet { records })
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QuestionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn modality_counts(&self) -> BTreeMap<Modality, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.modality).or_insert(0) += 1;
        }
        counts
    }

    pub fn check_declared_counts(&self, declared: &BTreeMap<Modality, usize>) -> Result<(), DatasetError> {
        let found = self.modality_counts();
        let normalized: BTreeMap<Modality, usize> = declared.iter().filter(|(_, &n)| n > 0).map(|(m, n)| (*m, *n)).collect();
        if normalized != found {
            return Err(DatasetError::DeclaredCounts {
                declared: declared.clone(),
                found,
            });
        }
        Ok(())
    }
}

/// Source keys for each record field, so files with other schemas can be
/// ingested without conversion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub audio: String,
    pub question: String,
    pub choices: String,
    pub answer: String,
    pub modality: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            audio: "audio".into(),
            question: "question".into(),
            choices: "choices".into(),
            answer: "answer".into(),
            modality: "modality".into(),
        }
    }
}

/// Optional sidecar next to a benchmark file (`<file>.manifest.json`).
#[derive(Debug, Clone, Deserialize)]
pub struct BenchmarkManifest {
    pub counts: BTreeMap<Modality, usize>,
}

fn field_str(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(format!("field {key:?} must be a string, got {other}")),
        None => Err(format!("missing field {key:?}")),
    }
}

fn parse_record(value: Value, map: &FieldMap) -> Result<QuestionRecord, String> {
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let raw_choices = obj
        .get(&map.choices)
        .ok_or_else(|| format!("missing field {:?}", map.choices))?
        .as_array()
        .ok_or_else(|| format!("field {:?} must be an array", map.choices))?;
    let choices: Vec<String> = raw_choices
        .iter()
        .map(|c| c.as_str().map(str::to_string).ok_or_else(|| format!("choice {c} is not a string")))
        .collect::<Result<_, _>>()?;
    let choices: [String; 4] = choices
        .try_into()
        .map_err(|c: Vec<String>| format!("expected exactly 4 choices, got {}", c.len()))?;
    let record = QuestionRecord {
        id: field_str(obj, &map.id)?,
        audio_ref: field_str(obj, &map.audio)?,
        question: field_str(obj, &map.question)?,
        choices,
        gold: field_str(obj, &map.answer)?,
        modality: field_str(obj, &map.modality)?.parse()?,
    };
    record.validate()?;
    Ok(record)
}

/// Reads one JSON object per line. Fails fast on the first bad record.
pub fn load_benchmark<R: BufRead>(source: R, map: &FieldMap) -> Result<BenchmarkSet, DatasetError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Ingestion {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| DatasetError::Ingestion { line: line_no, reason };
        let value: Value = serde_json::from_str(&line).map_err(|e| fail(format!("invalid JSON: {e}")))?;
        let record = parse_record(value, map).map_err(fail)?;
        if !ids.insert(record.id.clone()) {
            return Err(fail(format!("duplicate id {:?}", record.id)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyBenchmark);
    }
    Ok(BenchmarkSet { records })
}

/// Loads a benchmark file and, when `<path>.manifest.json` exists, checks
/// the per-modality counts it declares.
pub fn load_benchmark_file(path: &Path, map: &FieldMap) -> Result<BenchmarkSet, DatasetError> {
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move |source| DatasetError::Io { path: p, source }
    };
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let set = load_benchmark(std::io::BufReader::new(file), map)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".manifest.json");
    let sidecar = Path::new(&sidecar);
    if sidecar.exists() {
        let text = std::fs::read_to_string(sidecar).map_err(io_err(sidecar))?;
        let manifest: BenchmarkManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Ingestion {
            line: 0,
            reason: format!("{}: {e}", sidecar.display()),
        })?;
        set.check_declared_counts(&manifest.counts)?;
    }
    Ok(set)
}

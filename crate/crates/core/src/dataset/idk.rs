use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BenchmarkSet, DatasetError, FieldMap, QuestionRecord};
use crate::metrics::{classify_outcome, Fraction, OutcomeLabel, IDK_TOKEN};
use crate::pipelines::render_baseline;

/// The `n` normalized answers sampled for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub question_id: String,
    pub samples: Vec<String>,
}

impl SampleSet {
    pub fn new(question_id: impl Into<String>, samples: Vec<String>) -> Self {
        SampleSet {
            question_id: question_id.into(),
            samples,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

/// Keep the gold label iff at least `k` of `n` sampled answers are correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdkThreshold {
    pub k: usize,
    pub n: usize,
}

impl IdkThreshold {
    pub fn new(k: usize, n: usize) -> Result<Self, DatasetError> {
        if n == 0 {
            return Err(DatasetError::Threshold("n must be at least 1".into()));
        }
        if k > n {
            return Err(DatasetError::Threshold(format!("k = {k} exceeds n = {n}")));
        }
        Ok(IdkThreshold { k, n })
    }
}

impl std::fmt::Display for IdkThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.k, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdkRecord {
    pub record: QuestionRecord,
    /// Gold text or `"IDK"`.
    pub label: String,
}

impl IdkRecord {
    pub fn is_idk(&self) -> bool {
        self.label == IDK_TOKEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdkDataset {
    pub records: Vec<IdkRecord>,
    pub threshold: IdkThreshold,
    pub idk_fraction: Fraction,
}

impl IdkDataset {
    fn from_records(records: Vec<IdkRecord>, threshold: IdkThreshold) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let idk = records.iter().filter(|r| r.is_idk()).count();
        let idk_fraction = Fraction::new(idk as u64, records.len() as u64);
        Ok(IdkDataset {
            records,
            threshold,
            idk_fraction,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn idk_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_idk()).count()
    }

    /// Benchmark-schema lines with an extra `label` key.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for item in &self.records {
            let r = &item.record;
            let line = serde_json::json!({
                "id": r.id,
                "audio": r.audio_ref,
                "question": r.question,
                "choices": r.choices,
                "answer": r.gold,
                "modality": r.modality,
                "label": item.label,
            });
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(source: R, threshold: IdkThreshold) -> Result<Self, DatasetError> {
        let lines: Vec<String> = source.lines().collect::<Result<_, _>>().map_err(|e| DatasetError::Ingestion {
            line: 0,
            reason: e.to_string(),
        })?;
        let bench = super::load_benchmark(lines.join("\n").as_bytes(), &FieldMap::default())?;
        let labels = lines.iter().filter(|l| !l.trim().is_empty()).map(|l| {
            serde_json::from_str::<serde_json::Value>(l)
                .ok()
                .and_then(|v| v.get("label").and_then(|x| x.as_str()).map(str::to_string))
        });
        let mut records = Vec::new();
        for (i, (record, label)) in bench.records().iter().zip(labels).enumerate() {
            let label = label.ok_or_else(|| DatasetError::Ingestion {
                line: i + 1,
                reason: "missing field \"label\"".into(),
            })?;
            check_label(&label, record).map_err(|reason| DatasetError::Ingestion { line: i + 1, reason })?;
            records.push(IdkRecord {
                record: record.clone(),
                label,
            });
        }
        IdkDataset::from_records(records, threshold)
    }
}

fn check_label(label: &str, record: &QuestionRecord) -> Result<(), String> {
    if label == IDK_TOKEN || label == record.gold {
        Ok(())
    } else {
        Err(format!("label {label:?} of {:?} is neither the gold answer nor IDK", record.id))
    }
}

/// Per question, in benchmark order, the number of correct samples.
fn correct_counts(benchmark: &BenchmarkSet, samples: &BTreeMap<String, SampleSet>, n: usize) -> Result<Vec<usize>, DatasetError> {
    let missing: Vec<String> = benchmark
        .records()
        .iter()
        .filter(|r| !samples.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingSamples(missing));
    }
    benchmark
        .records()
        .iter()
        .map(|r| {
            let set = &samples[&r.id];
            if set.n() != n {
                return Err(DatasetError::Threshold(format!(
                    "question {:?} has {} samples, threshold expects {n}",
                    r.id,
                    set.n()
                )));
            }
            let mut correct = 0;
            for s in &set.samples {
                let label =
                    classify_outcome(s, &r.gold, &r.choices).map_err(|e| DatasetError::Threshold(format!("question {:?}: {e}", r.id)))?;
                if label == OutcomeLabel::Correct {
                    correct += 1;
                }
            }
            Ok(correct)
        })
        .collect()
}

pub fn build_idk_dataset(
    benchmark: &BenchmarkSet,
    samples: &BTreeMap<String, SampleSet>,
    threshold: IdkThreshold,
) -> Result<IdkDataset, DatasetError> {
    let counts = correct_counts(benchmark, samples, threshold.n)?;
    let records = benchmark
        .records()
        .iter()
        .zip(counts)
        .map(|(r, correct)| IdkRecord {
            record: r.clone(),
            label: if correct >= threshold.k {
                r.gold.clone()
            } else {
                IDK_TOKEN.to_string()
            },
        })
        .collect();
    IdkDataset::from_records(records, threshold)
}

/// IDK fraction for every threshold `k@n`, `k = 0..=n`.
pub fn idk_curve(
    benchmark: &BenchmarkSet,
    samples: &BTreeMap<String, SampleSet>,
    n: usize,
) -> Result<Vec<(usize, Fraction)>, DatasetError> {
    IdkThreshold::new(0, n)?;
    let counts = correct_counts(benchmark, samples, n)?;
    let total = counts.len() as u64;
    Ok((0..=n)
        .map(|k| {
            let idk = counts.iter().filter(|&&c| c < k).count() as u64;
            (k, Fraction::new(idk, total))
        })
        .collect())
}

/// Flat fine-tuning record: baseline prompt and the target to learn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub audio: String,
    pub prompt: String,
    pub target: String,
}

pub fn export_sft<W: Write>(dataset: &IdkDataset, mut sink: W) -> Result<usize, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    for item in &dataset.records {
        let record = SftRecord {
            id: item.record.id.clone(),
            audio: item.record.audio_ref.clone(),
            prompt: render_baseline(&item.record).text,
            target: item.label.clone(),
        };
        let line = serde_json::to_string(&record).expect("sft record serializes");
        writeln!(sink, "{line}").map_err(DatasetError::Export)?;
    }
    sink.flush().map_err(DatasetError::Export)?;
    Ok(dataset.len())
}

/// Rebuilds an [`IdkDataset`] from exported SFT records, joining on id
/// against the benchmark they were built from.
pub fn import_sft<R: BufRead>(source: R, benchmark: &BenchmarkSet, threshold: IdkThreshold) -> Result<IdkDataset, DatasetError> {
    let by_id: BTreeMap<&str, &QuestionRecord> = benchmark.records().iter().map(|r| (r.id.as_str(), r)).collect();
    let mut records = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let fail = |reason: String| DatasetError::Sft { line: i + 1, reason };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let sft: SftRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let record = by_id.get(sft.id.as_str()).ok_or_else(|| fail(format!("unknown id {:?}", sft.id)))?;
        check_label(&sft.target, record).map_err(fail)?;
        records.push(IdkRecord {
            record: (*record).clone(),
            label: sft.target,
        });
    }
    IdkDataset::from_records(records, threshold)
}

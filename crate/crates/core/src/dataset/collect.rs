use std::collections::BTreeMap;

use thiserror::Error;

use super::{BenchmarkSet, SampleSet};
use crate::client::{par_map, Backend, DecodeParams};
use crate::pipelines::{render_baseline, Normalizer, PipelineError};

/// Decoding used for the `n` sampling rounds; round `i` uses `seeds[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub seeds: Vec<u64>,
    pub max_tokens: Option<u32>,
}

impl SamplingConfig {
    /// `n` rounds seeded `base_seed, base_seed + 1, ...`.
    pub fn new(n: usize, base_seed: u64, temperature: f64, top_p: f64) -> Self {
        SamplingConfig {
            temperature,
            top_p,
            seeds: (0..n as u64).map(|i| base_seed.wrapping_add(i)).collect(),
            max_tokens: None,
        }
    }

    pub fn n(&self) -> usize {
        self.seeds.len()
    }

    fn decode(&self, round: usize) -> DecodeParams {
        DecodeParams {
            temperature: self.temperature,
            top_p: self.top_p,
            seed: Some(self.seeds[round]),
            max_tokens: self.max_tokens,
        }
    }
}

/// Sampling stopped early. `completed` holds every question that finished
/// and can be passed back as `resume_from`.
#[derive(Debug, Error)]
#[error("{} question(s) failed while sampling; first: {}", failures.len(), failures[0].1)]
pub struct CollectError {
    pub completed: BTreeMap<String, SampleSet>,
    pub failures: Vec<(String, PipelineError)>,
}

/// Samples every question `n` times with the baseline prompt and normalizes
/// each reply. Questions already complete in `resume_from` are not re-asked.
pub fn collect_samples(
    backend: &dyn Backend,
    benchmark: &BenchmarkSet,
    config: &SamplingConfig,
    normalizer: &Normalizer<'_>,
    resume_from: BTreeMap<String, SampleSet>,
    max_concurrency: usize,
) -> Result<BTreeMap<String, SampleSet>, CollectError> {
    let n = config.n();
    let mut completed: BTreeMap<String, SampleSet> = resume_from
        .into_iter()
        .filter(|(id, set)| set.n() == n && benchmark.get(id).is_some())
        .collect();
    let pending: Vec<_> = benchmark.records().iter().filter(|r| !completed.contains_key(&r.id)).collect();

    let results = par_map(&pending, max_concurrency, |_, record| {
        let prompt = render_baseline(record);
        let mut samples = Vec::with_capacity(n);
        for round in 0..n {
            let request = prompt.request(backend.model_name(), &config.decode(round));
            let raw = backend.send(&request).map_err(|source| PipelineError::Client {
                question_id: record.id.clone(),
                source,
            })?;
            let (answer, _) = normalizer.normalize(&record.id, &raw, &record.choices)?;
            samples.push(answer.value);
        }
        Ok::<_, PipelineError>(SampleSet::new(record.id.clone(), samples))
    });

    let mut failures = Vec::new();
    for (record, result) in pending.iter().zip(results) {
        match result {
            Ok(set) => {
                completed.insert(record.id.clone(), set);
            }
            Err(e) => failures.push((record.id.clone(), e)),
        }
    }
    if failures.is_empty() {
        Ok(completed)
    } else {
        Err(CollectError { completed, failures })
    }
}

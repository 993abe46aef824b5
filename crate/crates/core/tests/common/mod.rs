//! Shared fixtures: a scripted audio model and answer judge, recorded into a
//! replay file so the CLI can run without network access.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use idk_bench::client::{Backend, CachedBackend, ChatRequest, DecodeParams, ResponseCache, ScriptedBackend};
use idk_bench::dataset::{collect_samples, BenchmarkSet, Modality, QuestionRecord, SamplingConfig};
use idk_bench::pipelines::{answer_question, Normalizer, PipelineKind, PipelineOptions, AGENT_TYPE, IDK_INSTRUCTION};

pub const MODEL: &str = "scripted-audio-model";
pub const JUDGE: &str = "scripted-judge";
pub const EPOCH: &str = "1700000000";

pub fn choices_for(modality: Modality) -> [&'static str; 4] {
    match modality {
        Modality::Sound => ["a dog barking", "rain falling", "a car horn", "birdsong"],
        Modality::Music => ["piano", "violin", "drums", "flute"],
        Modality::Speech => ["happy", "sad", "angry", "neutral"],
    }
}

pub fn question(i: usize, modality: Modality) -> QuestionRecord {
    let choices = choices_for(modality).map(String::from);
    QuestionRecord {
        id: format!("q{i:04}"),
        audio_ref: format!("audio/{}/q{i:04}.wav", modality.as_str()),
        question: format!("Question {i:04}: what best describes this {} clip?", modality.as_str()),
        gold: choices[i % 4].clone(),
        choices,
        modality,
    }
}

/// 24 questions, 8 per modality.
pub fn hermetic_questions() -> Vec<QuestionRecord> {
    (0..24).map(|i| question(i, Modality::ALL[i / 8])).collect()
}

pub fn write_benchmark(path: &Path, questions: &[QuestionRecord]) {
    let mut text = String::new();
    for q in questions {
        let line = serde_json::json!({
            "id": q.id, "audio": q.audio_ref, "question": q.question,
            "choices": q.choices, "answer": q.gold, "modality": q.modality.as_str(),
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for q in questions {
        *counts.entry(q.modality.as_str()).or_insert(0usize) += 1;
    }
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".manifest.json");
    std::fs::write(sidecar, serde_json::json!({ "counts": counts }).to_string()).unwrap();
}

/// What a scripted answer should be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Correct,
    Wrong,
    Refuse,
}

fn pipeline_of(text: &str) -> usize {
    if text.contains("Let's think step by step.") {
        2
    } else if text.starts_with("The ") && text.contains(" content is: ") {
        3
    } else if text.ends_with(IDK_INSTRUCTION) {
        1
    } else {
        0
    }
}

/// Index and modality encoded in the audio path.
pub fn parse_audio(audio: &str) -> (usize, Modality) {
    let mut parts = audio.trim_start_matches("audio/").split('/');
    let modality: Modality = parts.next().unwrap().parse().unwrap();
    let index = parts
        .next()
        .unwrap()
        .trim_start_matches('q')
        .trim_end_matches(".wav")
        .parse()
        .unwrap();
    (index, modality)
}

/// Per-pipeline behaviour of the hermetic fixture. The baseline never
/// refuses; the other pipelines refuse wrong answers more often than
/// correct ones.
pub fn hermetic_intent(pipeline: usize, i: usize) -> Intent {
    let base_wrong = i.is_multiple_of(3);
    match (pipeline, base_wrong) {
        (0, true) => Intent::Wrong,
        (0, false) => Intent::Correct,
        (p, true) if (i + p).is_multiple_of(2) => Intent::Refuse,
        (_, true) => Intent::Wrong,
        (p, false) if (i + p).is_multiple_of(5) => Intent::Refuse,
        (_, false) => Intent::Correct,
    }
}

/// Phrases an intent in one of four styles, so every normalization path is
/// exercised: exact text, option letter, sentence, and free form that only
/// the judge can resolve.
pub fn phrase(intent: Intent, i: usize, modality: Modality, style: usize) -> String {
    let choices = choices_for(modality);
    let index = match intent {
        Intent::Correct => i % 4,
        Intent::Wrong => (i + 1) % 4,
        Intent::Refuse => {
            return match style % 4 {
                0 => "IDK".into(),
                1 => "I don't know.".into(),
                2 => "Sorry, I do not know.".into(),
                _ => "Hard to say, maybe none of them.".into(),
            }
        }
    };
    let letter = (b'A' + index as u8) as char;
    match style % 4 {
        0 => choices[index].to_string(),
        1 => format!("({letter})"),
        2 => format!("I believe the answer is {}.", choices[index]),
        _ => format!("My pick is option number {}.", index + 1),
    }
}

pub fn model_reply_with(req: &ChatRequest, intent: impl Fn(usize, usize) -> Intent) -> String {
    let msg = &req.messages[0];
    let text = msg.text.as_str();
    let (i, modality) = parse_audio(msg.audio_ref.as_deref().expect("model prompts carry audio"));
    if text == AGENT_TYPE {
        return match modality {
            Modality::Sound => "Sound".into(),
            Modality::Music => "music.".into(),
            Modality::Speech => "The audio is speech.".into(),
        };
    }
    if text.starts_with("What is the ") {
        return format!("A short {} recording, clip {i}.", modality.as_str());
    }
    let p = pipeline_of(text);
    phrase(intent(p, i), i, modality, i + p)
}

pub fn hermetic_model_reply(req: &ChatRequest) -> String {
    model_reply_with(req, hermetic_intent)
}

/// Maps a normalization prompt onto a choice, `IDK`, or an unusable reply.
pub fn judge_reply(req: &ChatRequest) -> String {
    let text = &req.messages[0].text;
    let answer = text.lines().find_map(|l| l.strip_prefix("The answer is: ")).unwrap_or("");
    let choices: Vec<&str> = text.lines().skip_while(|l| *l != "The choices are:").skip(1).take(4).collect();
    if let Some(rest) = answer.strip_prefix("My pick is option number ") {
        let n: usize = rest.trim_end_matches('.').parse().unwrap();
        let letter = (b'A' + (n - 1) as u8) as char;
        return if n % 2 == 1 {
            format!("Option {letter}: {}", choices[n - 1])
        } else {
            choices[n - 1].to_string()
        };
    }
    if answer.starts_with("Hard to say") {
        return "IDK".into();
    }
    "cannot tell".into()
}

pub struct Fixture {
    pub dir: PathBuf,
    pub benchmark: PathBuf,
    pub recording: PathBuf,
    pub backend_config: PathBuf,
    pub normalizer_config: PathBuf,
}

impl Fixture {
    /// Writes benchmark, backend configs and an empty recording under `dir`.
    pub fn create(dir: &Path, questions: &[QuestionRecord]) -> Fixture {
        let fixture = Fixture {
            dir: dir.to_path_buf(),
            benchmark: dir.join("benchmark.jsonl"),
            recording: dir.join("recording.jsonl"),
            backend_config: dir.join("backend.json"),
            normalizer_config: dir.join("judge.json"),
        };
        write_benchmark(&fixture.benchmark, questions);
        let config = |model: &str| {
            serde_json::json!({"backend": {"kind": "replay", "recording": "recording.jsonl", "model_name": model}}).to_string()
        };
        std::fs::write(&fixture.backend_config, config(MODEL)).unwrap();
        std::fs::write(&fixture.normalizer_config, config(JUDGE)).unwrap();
        fixture
    }

    fn cache(&self) -> Arc<ResponseCache> {
        Arc::new(ResponseCache::open(&self.recording).unwrap())
    }

    /// Records every call the CLI `evaluate` command makes with `--seed 0`.
    pub fn record_pipelines(
        &self,
        questions: &[QuestionRecord],
        pipelines: &[PipelineKind],
        model: impl Fn(&ChatRequest) -> String + Send + Sync + 'static,
    ) {
        let cache = self.cache();
        let model = CachedBackend::new(ScriptedBackend::new(MODEL, move |r| Ok(model(r))), cache.clone());
        let judge = CachedBackend::new(ScriptedBackend::new(JUDGE, |r| Ok(judge_reply(r))), cache);
        let options = PipelineOptions {
            decode: DecodeParams {
                seed: Some(0),
                ..DecodeParams::default()
            },
            fewshot_block: String::new(),
        };
        let normalizer = Normalizer::with_backend(&judge);
        for &kind in pipelines {
            for q in questions {
                answer_question(&model, kind, q, &options, &normalizer).unwrap();
            }
        }
    }

    /// Records the sampling rounds of `build-idk --seed 0`.
    pub fn record_sampling(&self, questions: &[QuestionRecord], n: usize, model: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) {
        let model = CachedBackend::new(ScriptedBackend::new(MODEL, move |r| Ok(model(r))), self.cache());
        let bench = BenchmarkSet::new(questions.to_vec()).unwrap();
        let config = SamplingConfig::new(n, 0, 1.0, 1.0);
        collect_samples(
            &model as &dyn Backend,
            &bench,
            &config,
            &Normalizer::rules_only(),
            Default::default(),
            4,
        )
        .unwrap();
    }

    pub fn run(&self, args: &[&str]) -> Output {
        run_cli(&self.dir, args)
    }
}

pub fn run_cli(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idk-bench"))
        .args(args)
        .current_dir(cwd)
        .env("SOURCE_DATE_EPOCH", EPOCH)
        .output()
        .expect("binary runs")
}

pub fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes an outcomes file with the given (baseline_modality, label) rows.
pub fn write_outcomes(path: &Path, rows: &[(String, Modality, &str)]) {
    let mut text = String::new();
    for (id, modality, outcome) in rows {
        let line = serde_json::json!({"id": id, "modality": modality.as_str(), "raw": "", "normalized": "", "outcome": outcome});
        text.push_str(&line.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Every file under `dir`, relative path to bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

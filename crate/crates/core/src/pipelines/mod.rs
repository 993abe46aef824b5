//! Answering strategies: prompt rendering, the multi-step task agent, and
//! answer normalization.

mod agent;
mod normalize;
mod templates;

pub use agent::{run_task_agent, AgentTrace};
pub use normalize::{normalize_answer, rule_match, strict_match, NormalizeMethod, NormalizedAnswer, Normalizer, RuleOptions};
pub use templates::{
    render_agent_answer, render_agent_content, render_agent_type, render_baseline, render_idk, render_mcot, render_normalization,
    substitute, AGENT_ANSWER, AGENT_CONTENT, AGENT_TYPE, BASELINE, IDK, IDK_INSTRUCTION, MCOT, NORMALIZATION,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{Backend, ChatRequest, ClientError, DecodeParams};
use crate::dataset::QuestionRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("question {question_id}: {source}")]
    Client {
        question_id: String,
        #[source]
        source: ClientError,
    },
    #[error("question {question_id}: normalizer call failed: {source}")]
    Normalization {
        question_id: String,
        #[source]
        source: ClientError,
    },
    #[error("unknown pipeline {0:?}")]
    UnknownPipeline(String),
}

impl PipelineError {
    pub fn client_error(&self) -> Option<&ClientError> {
        match self {
            PipelineError::Client { source, .. } | PipelineError::Normalization { source, .. } => Some(source),
            PipelineError::UnknownPipeline(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Baseline,
    IdkPrompting,
    Mcot,
    TaskAgent,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::Baseline,
        PipelineKind::IdkPrompting,
        PipelineKind::Mcot,
        PipelineKind::TaskAgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Baseline => "baseline",
            PipelineKind::IdkPrompting => "idk-prompting",
            PipelineKind::Mcot => "mcot",
            PipelineKind::TaskAgent => "task-agent",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::Baseline => "Baseline",
            PipelineKind::IdkPrompting => "IDK Prompting",
            PipelineKind::Mcot => "MCoT",
            PipelineKind::TaskAgent => "Task Agent",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "baseline" => Ok(PipelineKind::Baseline),
            "idk" | "idkprompting" => Ok(PipelineKind::IdkPrompting),
            "mcot" => Ok(PipelineKind::Mcot),
            "agent" | "taskagent" => Ok(PipelineKind::TaskAgent),
            _ => Err(PipelineError::UnknownPipeline(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Single,
    AgentStep1,
    AgentStep2,
    AgentStep3,
    Normalization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub audio_ref: Option<String>,
    pub stage: Stage,
}

impl RenderedPrompt {
    pub fn request(&self, model_name: &str, decode: &DecodeParams) -> ChatRequest {
        ChatRequest::single(model_name, self.text.clone(), self.audio_ref.clone(), decode.clone())
    }
}

/// One model call, as persisted to `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    pub stage: Stage,
    pub prompt_digest: String,
    pub raw_reply: String,
}

pub(crate) fn call(
    backend: &dyn Backend,
    question_id: &str,
    prompt: &RenderedPrompt,
    decode: &DecodeParams,
) -> Result<TraceRecord, PipelineError> {
    let request = prompt.request(backend.model_name(), decode);
    let raw_reply = backend.send(&request).map_err(|source| PipelineError::Client {
        question_id: question_id.to_string(),
        source,
    })?;
    Ok(TraceRecord {
        question_id: question_id.to_string(),
        stage: prompt.stage,
        prompt_digest: request.digest(),
        raw_reply,
    })
}

/// Settings shared by every question in a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOptions {
    pub decode: DecodeParams,
    /// Few-shot block prepended to MCoT prompts; empty for none.
    pub fewshot_block: String,
}

/// The result of answering one question.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub question_id: String,
    /// Final free-form reply before normalization.
    pub raw_answer: String,
    pub trace: Vec<TraceRecord>,
    pub agent: Option<AgentTrace>,
}

pub fn run_pipeline(
    backend: &dyn Backend,
    kind: PipelineKind,
    question: &QuestionRecord,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let single = |prompt: RenderedPrompt| -> Result<PipelineOutput, PipelineError> {
        let record = call(backend, &question.id, &prompt, &options.decode)?;
        Ok(PipelineOutput {
            question_id: question.id.clone(),
            raw_answer: record.raw_reply.clone(),
            trace: vec![record],
            agent: None,
        })
    };
    match kind {
        PipelineKind::Baseline => single(render_baseline(question)),
        PipelineKind::IdkPrompting => single(render_idk(question)),
        PipelineKind::Mcot => single(render_mcot(question, &options.fewshot_block)),
        PipelineKind::TaskAgent => {
            let agent = run_task_agent(backend, question, &options.decode)?;
            Ok(PipelineOutput {
                question_id: question.id.clone(),
                raw_answer: agent.final_raw.clone(),
                trace: agent.trace.clone(),
                agent: Some(agent),
            })
        }
    }
}

/// Runs a pipeline then normalizes its answer, appending any normalizer
/// call to the trace.
pub fn answer_question(
    backend: &dyn Backend,
    kind: PipelineKind,
    question: &QuestionRecord,
    options: &PipelineOptions,
    normalizer: &Normalizer<'_>,
) -> Result<(PipelineOutput, NormalizedAnswer), PipelineError> {
    let mut output = run_pipeline(backend, kind, question, options)?;
    let (answer, trace) = normalizer.normalize(&question.id, &output.raw_answer, &question.choices)?;
    output.trace.extend(trace);
    Ok((output, answer))
}

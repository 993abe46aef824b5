use serde::{Deserialize, Serialize};

use super::{
    call, render_agent_answer, render_agent_content, render_agent_type, render_idk, rule_match, PipelineError, RuleOptions, TraceRecord,
};
use crate::client::{Backend, DecodeParams};
use crate::dataset::{Modality, QuestionRecord};

/// Everything the task agent produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    /// `None` when the type reply could not be parsed.
    pub detected_type: Option<Modality>,
    pub content: Option<String>,
    pub final_raw: String,
    /// Set when the agent gave up after step one and answered with a plain
    /// IDK prompt instead.
    pub fell_back: bool,
    pub trace: Vec<TraceRecord>,
}

/// Three calls: audio type, content description, then the question with the
/// description prepended. An unparseable type falls back to IDK prompting.
pub fn run_task_agent(backend: &dyn Backend, question: &QuestionRecord, decode: &DecodeParams) -> Result<AgentTrace, PipelineError> {
    let qid = question.id.as_str();
    let step1 = call(backend, qid, &render_agent_type(question), decode)?;
    let types = Modality::ALL.map(Modality::title);
    let detected = rule_match(&step1.raw_reply, &types, RuleOptions { letters: false }).and_then(|m| m.value.parse::<Modality>().ok());
    let Some(detected) = detected else {
        let fallback = call(backend, qid, &render_idk(question), decode)?;
        return Ok(AgentTrace {
            detected_type: None,
            content: None,
            final_raw: fallback.raw_reply.clone(),
            fell_back: true,
            trace: vec![step1, fallback],
        });
    };
    let step2 = call(backend, qid, &render_agent_content(question, detected), decode)?;
    let content = step2.raw_reply.trim().to_string();
    let step3 = call(backend, qid, &render_agent_answer(question, detected, &content), decode)?;
    Ok(AgentTrace {
        detected_type: Some(detected),
        content: Some(content),
        final_raw: step3.raw_reply.clone(),
        fell_back: false,
        trace: vec![step1, step2, step3],
    })
}

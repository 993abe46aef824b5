//! Prompt templates, reproduced byte-for-byte. Placeholders are `{name}`;
//! audio travels as a separate attachment, so it has no placeholder.

use crate::dataset::{Modality, QuestionRecord};

use super::{RenderedPrompt, Stage};

pub const IDK_INSTRUCTION: &str = "Output `IDK' if you don't know the answer.";

macro_rules! choice_block {
    () => {
        "Select one option from the provided choices:\n{choice_a}\n{choice_b}\n{choice_c}\n{choice_d}"
    };
}

macro_rules! idk_line {
    () => {
        "Output `IDK' if you don't know the answer."
    };
}

pub const BASELINE: &str = concat!("{question} ", choice_block!());

pub const IDK: &str = concat!("{question} ", choice_block!(), "\n", idk_line!());

pub const MCOT: &str = concat!(
    "{question} ",
    choice_block!(),
    "\n",
    "Let's think step by step.\n",
    "You can first analyze the sound, music, or speech and then answer the question.\n",
    idk_line!()
);

pub const AGENT_TYPE: &str = "Identify the type of audio. Select one option from the provided choices:\nSound\nMusic\nSpeech";

pub const AGENT_CONTENT: &str = "What is the {type} content?";

pub const AGENT_ANSWER: &str = concat!(
    "The {type} content is: {content}\n",
    "{question} ",
    choice_block!(),
    "\n",
    idk_line!()
);

pub const NORMALIZATION: &str = concat!(
    "According to the answer, select one option from the provided choices.\n",
    "The answer is: {answer}\n",
    "The choices are:\n",
    "{choice_a}\n{choice_b}\n{choice_c}\n{choice_d}\n",
    "IDK\n",
    "Don't output any other information."
);

/// Single-pass substitution: values are inserted verbatim and never
/// re-scanned. Panics on a placeholder without a value, which would be a
/// template bug rather than bad input.
pub fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("unterminated placeholder in template");
        let name = &after[..close];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("no value for placeholder {{{name}}}"));
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

fn question_values(q: &QuestionRecord) -> [(&'static str, &str); 5] {
    [
        ("question", q.question.as_str()),
        ("choice_a", q.choices[0].as_str()),
        ("choice_b", q.choices[1].as_str()),
        ("choice_c", q.choices[2].as_str()),
        ("choice_d", q.choices[3].as_str()),
    ]
}

fn with_audio(text: String, q: &QuestionRecord, stage: Stage) -> RenderedPrompt {
    RenderedPrompt {
        text,
        audio_ref: Some(q.audio_ref.clone()),
        stage,
    }
}

pub fn render_baseline(q: &QuestionRecord) -> RenderedPrompt {
    with_audio(substitute(BASELINE, &question_values(q)), q, Stage::Single)
}

pub fn render_idk(q: &QuestionRecord) -> RenderedPrompt {
    with_audio(substitute(IDK, &question_values(q)), q, Stage::Single)
}

/// A non-empty few-shot block is placed before the prompt, separated by one
/// blank line.
pub fn render_mcot(q: &QuestionRecord, fewshot_block: &str) -> RenderedPrompt {
    let body = substitute(MCOT, &question_values(q));
    let text = if fewshot_block.is_empty() {
        body
    } else {
        format!("{fewshot_block}\n\n{body}")
    };
    with_audio(text, q, Stage::Single)
}

pub fn render_agent_type(q: &QuestionRecord) -> RenderedPrompt {
    with_audio(AGENT_TYPE.to_string(), q, Stage::AgentStep1)
}

pub fn render_agent_content(q: &QuestionRecord, detected: Modality) -> RenderedPrompt {
    with_audio(substitute(AGENT_CONTENT, &[("type", detected.title())]), q, Stage::AgentStep2)
}

pub fn render_agent_answer(q: &QuestionRecord, detected: Modality, content: &str) -> RenderedPrompt {
    let [question, a, b, c, d] = question_values(q);
    let values = [("type", detected.title()), ("content", content), question, a, b, c, d];
    with_audio(substitute(AGENT_ANSWER, &values), q, Stage::AgentStep3)
}

pub fn render_normalization<S: AsRef<str>>(answer: &str, choices: &[S]) -> RenderedPrompt {
    assert_eq!(choices.len(), 4, "normalization prompt lists four choices");
    let values = [
        ("answer", answer),
        ("choice_a", choices[0].as_ref()),
        ("choice_b", choices[1].as_ref()),
        ("choice_c", choices[2].as_ref()),
        ("choice_d", choices[3].as_ref()),
    ];
    RenderedPrompt {
        text: substitute(NORMALIZATION, &values),
        audio_ref: None,
        stage: Stage::Normalization,
    }
}

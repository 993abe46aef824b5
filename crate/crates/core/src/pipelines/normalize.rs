use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{render_normalization, PipelineError, TraceRecord};
use crate::client::{Backend, ChatRequest, DecodeParams};
use crate::metrics::{IDK_TOKEN, UNPARSEABLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeMethod {
    RuleExact,
    RuleLetter,
    RuleContainment,
    ModelBacked,
    /// Nothing resolved the reply; value is the `UNPARSEABLE` sentinel.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedAnswer {
    /// A choice text, `"IDK"`, or `"UNPARSEABLE"`.
    pub value: String,
    pub method: NormalizeMethod,
}

impl NormalizedAnswer {
    fn new(value: impl Into<String>, method: NormalizeMethod) -> Self {
        NormalizedAnswer {
            value: value.into(),
            method,
        }
    }

    pub fn is_idk(&self) -> bool {
        self.value == IDK_TOKEN
    }

    pub fn is_unparseable(&self) -> bool {
        self.value == UNPARSEABLE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleOptions {
    /// Accept a leading option letter ("B", "(C)", "Option D:") as a choice index.
    pub letters: bool,
}

impl Default for RuleOptions {
    fn default() -> Self {
        RuleOptions { letters: true }
    }
}

fn letter_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?i:(?:the\s+)?(?:answer|option|choice)(?:\s+is)?\s*:?\s*)?\(?([A-Z])\)?(?:\s*$|[.):])").unwrap())
}

fn letter_prefix_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?i:(?:answer|option|choice)\s*)?\(?[A-Z]\)?\s*[.):\-]\s*").unwrap())
}

fn refusal_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bidk\b|\bi\s+(?:don['’]?t|do\s+not)\s+know\b").unwrap())
}

fn equal_choice<'a, S: AsRef<str>>(text: &str, choices: &'a [S]) -> Option<&'a str> {
    let text = text.trim();
    choices.iter().map(AsRef::as_ref).find(|c| c.trim().eq_ignore_ascii_case(text))
}

/// Rule-based extraction, tried in order: exact match, option letter,
/// unique containment, refusal. Ambiguous containment yields `None`.
pub fn rule_match<S: AsRef<str>>(raw: &str, choices: &[S], options: RuleOptions) -> Option<NormalizedAnswer> {
    if let Some(choice) = equal_choice(raw, choices) {
        return Some(NormalizedAnswer::new(choice.trim(), NormalizeMethod::RuleExact));
    }
    if options.letters {
        if let Some(caps) = letter_regex().captures(raw) {
            let index = (caps[1].as_bytes()[0] - b'A') as usize;
            if let Some(choice) = choices.get(index) {
                return Some(NormalizedAnswer::new(choice.as_ref().trim(), NormalizeMethod::RuleLetter));
            }
        }
    }
    let lowered = raw.to_lowercase();
    let contained: Vec<&str> = choices
        .iter()
        .map(AsRef::as_ref)
        .filter(|c| lowered.contains(&c.trim().to_lowercase()))
        .collect();
    match contained.as_slice() {
        [only] => return Some(NormalizedAnswer::new(only.trim(), NormalizeMethod::RuleContainment)),
        [] => {}
        _ => return None,
    }
    if raw.trim().eq_ignore_ascii_case(IDK_TOKEN) {
        return Some(NormalizedAnswer::new(IDK_TOKEN, NormalizeMethod::RuleExact));
    }
    if refusal_regex().is_match(raw) {
        return Some(NormalizedAnswer::new(IDK_TOKEN, NormalizeMethod::RuleContainment));
    }
    None
}

/// Matching for the normalizer model's reply: equality with a choice or
/// `IDK`, then one retry with a leading option label stripped.
pub fn strict_match<S: AsRef<str>>(reply: &str, choices: &[S]) -> Option<String> {
    let exact = |text: &str| {
        if text.trim().eq_ignore_ascii_case(IDK_TOKEN) {
            Some(IDK_TOKEN.to_string())
        } else {
            equal_choice(text, choices).map(|c| c.trim().to_string())
        }
    };
    exact(reply).or_else(|| {
        let stripped = letter_prefix_regex().replace(reply, "");
        if stripped.len() == reply.len() {
            None
        } else {
            exact(&stripped)
        }
    })
}

/// Maps free-form replies onto a choice or `IDK`: rules first, then the
/// optional normalizer model.
#[derive(Clone)]
pub struct Normalizer<'a> {
    pub backend: Option<&'a dyn Backend>,
    pub decode: DecodeParams,
    pub rules: RuleOptions,
}

impl<'a> Normalizer<'a> {
    pub fn rules_only() -> Self {
        Normalizer {
            backend: None,
            decode: DecodeParams::default(),
            rules: RuleOptions::default(),
        }
    }

    pub fn with_backend(backend: &'a dyn Backend) -> Self {
        Normalizer {
            backend: Some(backend),
            ..Normalizer::rules_only()
        }
    }

    /// Returns the answer and, when the model was consulted, its trace record.
    pub fn normalize<S: AsRef<str>>(
        &self,
        question_id: &str,
        raw: &str,
        choices: &[S],
    ) -> Result<(NormalizedAnswer, Option<TraceRecord>), PipelineError> {
        if let Some(answer) = rule_match(raw, choices, self.rules) {
            return Ok((answer, None));
        }
        let Some(backend) = self.backend else {
            return Ok((NormalizedAnswer::new(UNPARSEABLE, NormalizeMethod::Unresolved), None));
        };
        let prompt = render_normalization(raw, choices);
        let request = ChatRequest::single(backend.model_name(), prompt.text.clone(), None, self.decode.clone());
        let reply = backend.send(&request).map_err(|source| PipelineError::Normalization {
            question_id: question_id.to_string(),
            source,
        })?;
        let trace = TraceRecord {
            question_id: question_id.to_string(),
            stage: prompt.stage,
            prompt_digest: request.digest(),
            raw_reply: reply.clone(),
        };
        let answer = match strict_match(&reply, choices) {
            Some(value) => NormalizedAnswer::new(value, NormalizeMethod::ModelBacked),
            None => NormalizedAnswer::new(UNPARSEABLE, NormalizeMethod::ModelBacked),
        };
        Ok((answer, Some(trace)))
    }
}

pub fn normalize_answer<S: AsRef<str>>(raw: &str, choices: &[S], backend: Option<&dyn Backend>) -> Result<NormalizedAnswer, PipelineError> {
    let normalizer = Normalizer {
        backend,
        ..Normalizer::rules_only()
    };
    normalizer.normalize("", raw, choices).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientError, ScriptedBackend};
    use proptest::prelude::*;
    use NormalizeMethod::*;

    const CHOICES: [&str; 4] = ["rain falling", "a dog barking", "a violin", "thunder"];

    fn rm(raw: &str) -> Option<NormalizedAnswer> {
        rule_match(raw, &CHOICES, RuleOptions::default())
    }

    #[test]
    fn exact_and_case_insensitive() {
        assert_eq!(rm("  Rain Falling "), Some(NormalizedAnswer::new("rain falling", RuleExact)));
    }

    #[test]
    fn letter_forms() {
        for raw in ["C", "C.", "(C)", "C) a violin", "Option C: a violin", "The answer is C."] {
            assert_eq!(rm(raw), Some(NormalizedAnswer::new("a violin", RuleLetter)), "{raw}");
        }
        // "A dog barking" must not read as option A.
        assert_eq!(rm("A dog barking"), Some(NormalizedAnswer::new("a dog barking", RuleExact)));
        assert_eq!(rule_match("C", &CHOICES, RuleOptions { letters: false }), None);
        assert_eq!(rm("E"), None);
    }

    #[test]
    fn unique_containment() {
        assert_eq!(
            rm("The answer is: rain falling"),
            Some(NormalizedAnswer::new("rain falling", RuleContainment))
        );
    }

    #[test]
    fn ambiguous_containment_is_absent() {
        assert_eq!(rm("either rain falling or thunder"), None);
        assert_eq!(
            rm("rain falling, or maybe i don't know"),
            Some(NormalizedAnswer::new("rain falling", RuleContainment))
        );
    }

    #[test]
    fn refusals() {
        assert_eq!(
            rm("I don't know the answer to this."),
            Some(NormalizedAnswer::new("IDK", RuleContainment))
        );
        assert_eq!(rm("idk"), Some(NormalizedAnswer::new("IDK", RuleExact)));
        assert_eq!(rm("I do not know."), Some(NormalizedAnswer::new("IDK", RuleContainment)));
        assert_eq!(rm("Output `IDK'"), Some(NormalizedAnswer::new("IDK", RuleContainment)));
        assert_eq!(rm("kidding"), None);
    }

    #[test]
    fn agent_type_reply() {
        let types = ["Sound", "Music", "Speech"];
        let m = rule_match("music.", &types, RuleOptions { letters: false }).unwrap();
        assert_eq!(m.value, "Music");
    }

    #[test]
    fn rules_short_circuit_backend() {
        let backend = ScriptedBackend::echo("gpt");
        let answer = normalize_answer("a violin", &CHOICES, Some(&backend)).unwrap();
        assert_eq!(answer.method, RuleExact);
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn model_backed_idk() {
        let backend = ScriptedBackend::sequence("gpt", vec!["IDK".into()]);
        let answer = normalize_answer("hmm, hard to say", &CHOICES, Some(&backend)).unwrap();
        assert_eq!(answer, NormalizedAnswer::new("IDK", ModelBacked));
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn model_reply_with_option_label_resolves_on_retry() {
        let reply = "Option C: a violin";
        // First stage (equality) fails, the letter-strip retry resolves.
        assert_eq!(equal_choice(reply, &CHOICES), None);
        assert_eq!(strict_match(reply, &CHOICES).as_deref(), Some("a violin"));
        let backend = ScriptedBackend::sequence("gpt", vec![reply.into()]);
        let answer = normalize_answer("it sounds like bowed strings", &CHOICES, Some(&backend)).unwrap();
        assert_eq!(answer, NormalizedAnswer::new("a violin", ModelBacked));
    }

    #[test]
    fn normalization_prompt_sent() {
        let backend = ScriptedBackend::new("gpt", |req| {
            assert_eq!(req.messages[0].text, render_normalization("???", &CHOICES).text);
            assert!(req.messages[0].audio_ref.is_none());
            Ok("thunder".into())
        });
        let normalizer = Normalizer::with_backend(&backend);
        let (answer, trace) = normalizer.normalize("q9", "???", &CHOICES).unwrap();
        assert_eq!(answer.value, "thunder");
        let trace = trace.unwrap();
        assert_eq!(trace.question_id, "q9");
        assert_eq!(trace.raw_reply, "thunder");
    }

    #[test]
    fn unresolved_becomes_unparseable() {
        let backend = ScriptedBackend::sequence("gpt", vec!["The second one".into()]);
        assert_eq!(normalize_answer("???", &CHOICES, Some(&backend)).unwrap().value, UNPARSEABLE);
        assert_eq!(
            normalize_answer("???", &CHOICES, None).unwrap(),
            NormalizedAnswer::new(UNPARSEABLE, Unresolved)
        );
    }

    #[test]
    fn backend_failure_is_normalization_error() {
        let backend = ScriptedBackend::new("gpt", |_| Err(ClientError::Backend("down".into())));
        let normalizer = Normalizer::with_backend(&backend);
        assert!(matches!(
            normalizer.normalize("q1", "???", &CHOICES),
            Err(PipelineError::Normalization { .. })
        ));
    }

    proptest! {
        #[test]
        fn rule_match_stays_in_vocabulary(raw in "\\PC{0,60}") {
            if let Some(answer) = rm(&raw) {
                prop_assert!(answer.value == IDK_TOKEN || CHOICES.contains(&answer.value.as_str()));
            }
        }

        #[test]
        fn rule_match_is_deterministic(raw in "\\PC{0,40}") {
            prop_assert_eq!(rm(&raw), rm(&raw));
        }
    }
}

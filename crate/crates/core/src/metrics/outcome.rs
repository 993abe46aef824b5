use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Literal rejection token produced by answer normalization.
pub const IDK_TOKEN: &str = "IDK";

/// Sentinel for replies that could not be mapped to a choice or a refusal.
/// Scored as [`OutcomeLabel::Wrong`].
pub const UNPARSEABLE: &str = "UNPARSEABLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeLabel {
    Correct,
    Rejected,
    Wrong,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 3] = [OutcomeLabel::Correct, OutcomeLabel::Rejected, OutcomeLabel::Wrong];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Correct => "correct",
            OutcomeLabel::Rejected => "rejected",
            OutcomeLabel::Wrong => "wrong",
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" | "c" => Ok(OutcomeLabel::Correct),
            "rejected" | "r" => Ok(OutcomeLabel::Rejected),
            "wrong" | "w" => Ok(OutcomeLabel::Wrong),
            other => Err(format!("unknown outcome label {other:?}")),
        }
    }
}

/// Scores a normalized answer against the gold choice.
///
/// `normalized` must be `"IDK"`, the `UNPARSEABLE` sentinel, or one of
/// `choices`; anything else means normalization did not run.
pub fn classify_outcome<S: AsRef<str>>(normalized: &str, gold: &str, choices: &[S]) -> Result<OutcomeLabel, MetricsError> {
    let answer = normalized.trim();
    if answer == IDK_TOKEN {
        return Ok(OutcomeLabel::Rejected);
    }
    if answer == UNPARSEABLE {
        return Ok(OutcomeLabel::Wrong);
    }
    if !choices.iter().any(|c| c.as_ref().trim() == answer) {
        return Err(MetricsError::Classification {
            answer: normalized.to_string(),
        });
    }
    if answer == gold.trim() {
        Ok(OutcomeLabel::Correct)
    } else {
        Ok(OutcomeLabel::Wrong)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ReliabilityCounts {
    pub n_correct: u64,
    pub n_rejected: u64,
    pub n_wrong: u64,
}

impl ReliabilityCounts {
    pub fn new(n_correct: u64, n_rejected: u64, n_wrong: u64) -> Self {
        ReliabilityCounts {
            n_correct,
            n_rejected,
            n_wrong,
        }
    }

    pub fn total(&self) -> u64 {
        self.n_correct + self.n_rejected + self.n_wrong
    }

    pub fn add(&mut self, label: OutcomeLabel) {
        match label {
            OutcomeLabel::Correct => self.n_correct += 1,
            OutcomeLabel::Rejected => self.n_rejected += 1,
            OutcomeLabel::Wrong => self.n_wrong += 1,
        }
    }

    pub fn scaled(&self, k: u64) -> Self {
        ReliabilityCounts::new(self.n_correct * k, self.n_rejected * k, self.n_wrong * k)
    }
}

impl std::ops::Add for ReliabilityCounts {
    type Output = ReliabilityCounts;

    fn add(self, rhs: Self) -> Self {
        ReliabilityCounts::new(
            self.n_correct + rhs.n_correct,
            self.n_rejected + rhs.n_rejected,
            self.n_wrong + rhs.n_wrong,
        )
    }
}

pub fn tally<I>(outcomes: I) -> Result<ReliabilityCounts, MetricsError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<OutcomeLabel>,
{
    use std::borrow::Borrow;
    let mut counts = ReliabilityCounts::default();
    for label in outcomes {
        counts.add(*label.borrow());
    }
    if counts.total() == 0 {
        return Err(MetricsError::EmptyRun);
    }
    Ok(counts)
}

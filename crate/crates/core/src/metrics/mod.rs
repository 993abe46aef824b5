//! Reliability metrics for abstaining question answerers.
//!
//! Everything here is a pure function of counts. Accuracy, truthfulness,
//! rejection rate and reliability come from a single run; the transition
//! matrix, conservativeness/humbleness increases and the Reliability Gain
//! Index (RGI) compare a method run against the rejection-free baseline it
//! started from.

mod fraction;
mod gain;
mod outcome;
mod report;
mod uniform;

pub use fraction::Fraction;
pub use gain::{gain_report, macro_gain, transition_matrix, EvalRun, GainReport, Rgi, TransitionMatrix};
pub use outcome::{classify_outcome, tally, OutcomeLabel, ReliabilityCounts, IDK_TOKEN, UNPARSEABLE};
pub use report::{macro_report, reliability_report, ReliabilityReport};
pub use uniform::{simulate_uniform_rejection, uniform_rejection_closed_form, UniformRejectionOutcome};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty run: at least one outcome is required")]
    EmptyRun,
    #[error("answer {answer:?} is neither a choice nor the rejection token; normalization failed upstream")]
    Classification { answer: String },
    #[error("runs are not paired: ids only in baseline {only_baseline:?}, only in method {only_method:?}")]
    Pairing {
        only_baseline: Vec<String>,
        only_method: Vec<String>,
    },
    #[error("duplicate question id {0:?} in run")]
    DuplicateId(String),
    #[error("baseline contains {0} rejected outcome(s); the baseline must answer every query")]
    BaselineContamination(u64),
    #[error("degenerate baseline: {0} baseline answers is zero, gain is 0/0")]
    DegenerateBaseline(&'static str),
    #[error("parameter {name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: String },
}

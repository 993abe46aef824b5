//! Python bindings for the reliability metrics, prompt renderers and the
//! rule-based answer matcher.

use std::collections::BTreeMap;

use idk_bench::dataset::{Modality, QuestionRecord};
use idk_bench::metrics::{self, Fraction, ReliabilityCounts, TransitionMatrix};
use idk_bench::pipelines::{self, PipelineKind, RuleOptions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn unit(name: &str, value: &str) -> PyResult<Fraction> {
    Fraction::parse_decimal(value).ok_or_else(|| value_error(format!("{name} must be a decimal number, got {value:?}")))
}

/// Accuracy, truthfulness, rejection rate and reliability as fractions in [0, 1].
#[pyfunction]
fn reliability(n_correct: u64, n_rejected: u64, n_wrong: u64) -> PyResult<BTreeMap<&'static str, f64>> {
    let r = metrics::reliability_report(&ReliabilityCounts::new(n_correct, n_rejected, n_wrong)).map_err(value_error)?;
    Ok(BTreeMap::from([
        ("accuracy", r.accuracy.to_f64()),
        ("truthfulness", r.truthfulness.to_f64()),
        ("rejection_rate", r.rejection_rate.to_f64()),
        ("reliability", r.reliability.to_f64()),
    ]))
}

/// `(delta_con, delta_hum, rgi)` from the six transition counts. RGI is
/// `inf`, `-inf` or `nan` when a delta is zero.
#[pyfunction]
fn gain(cc: u64, cr: u64, cw: u64, wc: u64, wr: u64, ww: u64) -> PyResult<(f64, f64, f64)> {
    let matrix = TransitionMatrix { cc, cr, cw, wc, wr, ww };
    let r = metrics::gain_report(&matrix).map_err(value_error)?;
    Ok((r.delta_con.to_f64(), r.delta_hum.to_f64(), r.rgi.to_f64()))
}

/// Rendered RGI, two decimals or `+inf` / `-inf` / `undef`.
#[pyfunction]
fn rgi(delta_con: &str, delta_hum: &str) -> PyResult<String> {
    Ok(metrics::Rgi::from_deltas(&unit("delta_con", delta_con)?, &unit("delta_hum", delta_hum)?).render())
}

/// Closed-form outcome of rejecting a fraction `rho` of answers uniformly at
/// random from a model with accuracy `alpha`. Both are decimal strings.
#[pyfunction]
fn uniform_rejection<'py>(py: Python<'py>, alpha: &str, rho: &str) -> PyResult<Bound<'py, PyDict>> {
    let o = metrics::uniform_rejection_closed_form(&unit("alpha", alpha)?, &unit("rho", rho)?).map_err(value_error)?;
    let d = PyDict::new(py);
    for (key, value) in [
        ("acc_new", &o.acc_new),
        ("rej_new", &o.rej_new),
        ("tru_new", &o.tru_new),
        ("rel_new", &o.rel_new),
        ("rel_org", &o.rel_org),
    ] {
        d.set_item(key, value.to_f64())?;
    }
    d.set_item("deceptive", o.deceptive)?;
    Ok(d)
}

fn record(question: &str, choices: [String; 4]) -> QuestionRecord {
    QuestionRecord {
        id: String::new(),
        audio_ref: String::new(),
        question: question.to_string(),
        gold: choices[0].clone(),
        choices,
        modality: Modality::Sound,
    }
}

/// Prompt text for a single-call pipeline: `baseline`, `idk-prompting` or `mcot`.
#[pyfunction]
#[pyo3(signature = (pipeline, question, choices, fewshot = ""))]
fn render_prompt(pipeline: &str, question: &str, choices: [String; 4], fewshot: &str) -> PyResult<String> {
    let q = record(question, choices);
    let kind: PipelineKind = pipeline.parse().map_err(value_error)?;
    match kind {
        PipelineKind::Baseline => Ok(pipelines::render_baseline(&q).text),
        PipelineKind::IdkPrompting => Ok(pipelines::render_idk(&q).text),
        PipelineKind::Mcot => Ok(pipelines::render_mcot(&q, fewshot).text),
        PipelineKind::TaskAgent => Err(value_error("the task agent is multi-step; use render_agent_step")),
    }
}

/// Prompt text for step 1, 2 or 3 of the task agent.
#[pyfunction]
#[pyo3(signature = (step, question, choices, modality = "sound", content = ""))]
fn render_agent_step(step: u8, question: &str, choices: [String; 4], modality: &str, content: &str) -> PyResult<String> {
    let q = record(question, choices);
    let modality: Modality = modality.parse().map_err(value_error)?;
    match step {
        1 => Ok(pipelines::render_agent_type(&q).text),
        2 => Ok(pipelines::render_agent_content(&q, modality).text),
        3 => Ok(pipelines::render_agent_answer(&q, modality, content).text),
        _ => Err(value_error(format!("step must be 1, 2 or 3, got {step}"))),
    }
}

/// Rule-based extraction: the matched choice text, `IDK`, or `None`.
#[pyfunction]
fn rule_match(raw: &str, choices: Vec<String>) -> Option<String> {
    pipelines::rule_match(raw, &choices, RuleOptions::default()).map(|a| a.value)
}

#[pymodule]
#[pyo3(name = "idk_bench")]
fn idk_bench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reliability, m)?)?;
    m.add_function(wrap_pyfunction!(gain, m)?)?;
    m.add_function(wrap_pyfunction!(rgi, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_rejection, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(render_agent_step, m)?)?;
    m.add_function(wrap_pyfunction!(rule_match, m)?)?;
    Ok(())
}

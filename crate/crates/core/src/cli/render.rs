//! Tabular report emission. Every format prints the same two-decimal
//! rendering, so Markdown, CSV and JSON agree digit for digit.

use serde_json::{json, Value};

use crate::dataset::Modality;
use crate::metrics::{Fraction, GainReport, ReliabilityCounts, ReliabilityReport, Rgi, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalMode {
    /// Pool every question, then compute the metrics.
    Micro,
    /// Mean of the per-modality metrics.
    Macro,
}

impl TotalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TotalMode::Micro => "micro",
            TotalMode::Macro => "macro",
        }
    }
}

/// `None` stands for the total row.
pub(crate) fn slice_title(slice: Option<Modality>) -> &'static str {
    slice.map_or("Total", Modality::title)
}

fn slice_key(slice: Option<Modality>) -> &'static str {
    slice.map_or("total", Modality::as_str)
}

fn number(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn rgi_value(rgi: &Rgi) -> Value {
    number(&rgi.render())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityRow {
    pub slice: Option<Modality>,
    pub counts: ReliabilityCounts,
    pub report: ReliabilityReport,
}

pub fn reliability_markdown(label: &str, rows: &[ReliabilityRow]) -> String {
    let mut header = String::from("| Method |");
    let mut rule = String::from("|---|");
    let mut body = format!("| {label} |");
    for row in rows {
        let title = slice_title(row.slice);
        for metric in ["Acc", "Tru", "Rel"] {
            header.push_str(&format!(" {title} {metric} |"));
            rule.push_str("---:|");
        }
        let r = &row.report;
        body.push_str(&format!(
            " {} | {} | {} |",
            r.accuracy.percent(),
            r.truthfulness.percent(),
            r.reliability.percent()
        ));
    }
    format!("{header}\n{rule}\n{body}\n")
}

pub fn reliability_csv(rows: &[ReliabilityRow], digest: &str) -> String {
    let mut out = String::from("slice,n,n_correct,n_rejected,n_wrong,accuracy,truthfulness,rejection_rate,reliability,manifest_digest\n");
    for row in rows {
        let (c, r) = (&row.counts, &row.report);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{digest}\n",
            slice_key(row.slice),
            c.total(),
            c.n_correct,
            c.n_rejected,
            c.n_wrong,
            r.accuracy.percent(),
            r.truthfulness.percent(),
            r.rejection_rate.percent(),
            r.reliability.percent()
        ));
    }
    out
}

pub(crate) fn reliability_json(rows: &[ReliabilityRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|row| {
                let (c, r) = (&row.counts, &row.report);
                json!({
                    "slice": slice_key(row.slice),
                    "n": c.total(),
                    "n_correct": c.n_correct,
                    "n_rejected": c.n_rejected,
                    "n_wrong": c.n_wrong,
                    "accuracy": number(&r.accuracy.percent()),
                    "truthfulness": number(&r.truthfulness.percent()),
                    "rejection_rate": number(&r.rejection_rate.percent()),
                    "reliability": number(&r.reliability.percent()),
                })
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub slice: Option<Modality>,
    pub matrix: TransitionMatrix,
    pub report: GainReport,
}

pub fn gain_markdown(label: &str, rows: &[GainRow]) -> String {
    let mut header = String::from("| Method |");
    let mut rule = String::from("|---|");
    let mut body = format!("| {label} |");
    for row in rows {
        let title = slice_title(row.slice);
        for metric in ["ΔCon", "ΔHum", "RGI"] {
            header.push_str(&format!(" {title} {metric} |"));
            rule.push_str("---:|");
        }
        let r = &row.report;
        body.push_str(&format!(
            " {} | {} | {} |",
            r.delta_con.percent(),
            r.delta_hum.percent(),
            r.rgi.render()
        ));
    }
    format!("{header}\n{rule}\n{body}\n")
}

pub(crate) fn gain_csv(rows: &[GainRow], digest: &str) -> String {
    let mut out = String::from("slice,cc,cr,cw,wc,wr,ww,delta_con,delta_hum,rgi,manifest_digest\n");
    for row in rows {
        let (m, r) = (&row.matrix, &row.report);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{digest}\n",
            slice_key(row.slice),
            m.cc,
            m.cr,
            m.cw,
            m.wc,
            m.wr,
            m.ww,
            r.delta_con.percent(),
            r.delta_hum.percent(),
            r.rgi.render()
        ));
    }
    out
}

pub(crate) fn gain_json(rows: &[GainRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|row| {
                let (m, r) = (&row.matrix, &row.report);
                json!({
                    "slice": slice_key(row.slice),
                    "matrix": {"cc": m.cc, "cr": m.cr, "cw": m.cw, "wc": m.wc, "wr": m.wr, "ww": m.ww},
                    "delta_con": number(&r.delta_con.percent()),
                    "delta_hum": number(&r.delta_hum.percent()),
                    "rgi": rgi_value(&r.rgi),
                })
            })
            .collect(),
    )
}

/// One cell of a train-by-test grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCell {
    pub train: Modality,
    pub test: Modality,
    pub report: GainReport,
}

pub(crate) fn cross_modal_json(cells: &[CrossCell]) -> Value {
    Value::Array(
        cells
            .iter()
            .map(|c| {
                json!({
                    "train": c.train.as_str(),
                    "test": c.test.as_str(),
                    "delta_con": number(&c.report.delta_con.percent()),
                    "delta_hum": number(&c.report.delta_hum.percent()),
                    "rgi": rgi_value(&c.report.rgi),
                })
            })
            .collect(),
    )
}

/// Rows are training modalities, columns test modalities.
pub fn cross_modal_markdown(cells: &[CrossCell]) -> String {
    let mut out = String::from("| Train \\ Test |");
    for m in Modality::ALL {
        out.push_str(&format!(" {} |", m.title()));
    }
    out.push_str("\n|---|---:|---:|---:|\n");
    for train in Modality::ALL {
        out.push_str(&format!("| {} |", train.title()));
        for test in Modality::ALL {
            match cells.iter().find(|c| c.train == train && c.test == test) {
                Some(c) => out.push_str(&format!(" {} |", c.report.rgi.render())),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

pub(crate) fn simulate_header(monte_carlo: bool) -> Vec<&'static str> {
    let mut cols = vec!["alpha", "rho", "acc_new", "rej_new", "tru_new", "rel_new", "rel_org", "deceptive"];
    if monte_carlo {
        cols.push("rel_monte_carlo");
    }
    cols
}

pub(crate) fn percent_or_dash(value: Option<&Fraction>) -> String {
    value.map_or_else(|| "-".to_string(), Fraction::percent)
}

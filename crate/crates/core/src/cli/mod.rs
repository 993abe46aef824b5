//! Command-line harness.
//!
//! Exit codes are stable: 0 success, 1 I/O or internal failure, 2 usage,
//! 3 ingestion, 4 backend, 5 pairing, 6 completeness.

mod artifacts;
mod commands;
mod render;
mod svg;

pub use artifacts::{read_outcomes, write_atomic, OutcomeRow, RunManifest};
pub use render::{
    cross_modal_markdown, gain_markdown, reliability_csv, reliability_markdown, CrossCell, GainRow, ReliabilityRow, TotalMode,
};
pub use svg::{curve_svg, heatmap_color, heatmap_svg, HeatCell};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::client::ClientError;
use crate::dataset::DatasetError;
use crate::metrics::MetricsError;
use crate::pipelines::PipelineKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("backend error: {0}")]
    Backend(#[from] ClientError),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("incomplete run: {0}")]
    Completeness(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Ingestion(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Pairing(_) => 5,
            CliError::Completeness(_) => 6,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::MissingSamples(_) => CliError::Completeness(e.to_string()),
            DatasetError::Io { path, source } => CliError::Io { path: path.into(), source },
            other => CliError::Ingestion(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::OutOfRange { .. } => CliError::Usage(e.to_string()),
            MetricsError::Classification { .. } => CliError::Ingestion(e.to_string()),
            other => CliError::Pairing(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "idk-bench", version, about = "Reliability benchmark harness for audio language models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Backend config file (JSON).
    #[arg(long, global = true)]
    pub backend_config: Option<PathBuf>,
    /// Backend config for the answer normalizer model.
    #[arg(long, global = true)]
    pub normalizer_config: Option<PathBuf>,
    /// Response cache file shared by all HTTP backends.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Drop questions that failed or stayed unparseable instead of aborting.
    #[arg(long, global = true)]
    pub skip_unparseable: bool,
    /// Report totals as the mean over modalities instead of pooling.
    #[arg(long = "macro", global = true)]
    pub macro_total: bool,
    #[arg(long, global = true)]
    pub max_concurrency: Option<usize>,
    /// Use rule-based answer extraction only.
    #[arg(long, global = true)]
    pub no_llm_normalization: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one pipeline over a benchmark and report reliability metrics.
    Evaluate {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_parser = parse_pipeline)]
        pipeline: PipelineKind,
        /// Field-name mapping for the benchmark JSONL (JSON object).
        #[arg(long)]
        field_map: Option<PathBuf>,
        /// Few-shot block prepended to MCoT prompts.
        #[arg(long)]
        fewshot: Option<PathBuf>,
    },
    /// Compare a method run against a baseline run.
    Gain {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        method: PathBuf,
        /// Row label in the Markdown table.
        #[arg(long, default_value = "Method")]
        label: String,
    },
    /// RGI matrix for models trained on one modality and tested on another.
    CrossModal {
        /// Grid file listing (train, test, baseline, method) cells.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Uniform-rejection analysis of the reliability metric.
    Simulate {
        #[arg(long, required_unless_present = "sweep")]
        alpha: Option<String>,
        #[arg(long, required_unless_present = "sweep")]
        rho: Option<String>,
        /// Evaluate the full grid alpha 0.1..0.9 by rho 0.05..0.95.
        #[arg(long, conflicts_with_all = ["alpha", "rho"])]
        sweep: bool,
        /// Also run a Monte-Carlo simulation with this many answers.
        #[arg(long)]
        monte_carlo: Option<u64>,
    },
    /// Sample a model n times per question and relabel with the k@n rule.
    BuildIdk {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 1.0)]
        top_p: f64,
        #[arg(long)]
        field_map: Option<PathBuf>,
        /// samples.jsonl from an interrupted run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Convert an IDK dataset into fine-tuning records.
    ExportSft {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
    },
}

fn parse_pipeline(s: &str) -> Result<PipelineKind, String> {
    s.parse().map_err(|e: crate::pipelines::PipelineError| e.to_string())
}

/// Runs a parsed command line; the returned text is what the command prints.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Evaluate {
            benchmark,
            pipeline,
            field_map,
            fewshot,
        } => commands::evaluate(&cli.global, benchmark, *pipeline, field_map.as_deref(), fewshot.as_deref()),
        Command::Gain { baseline, method, label } => commands::gain(&cli.global, baseline, method, label),
        Command::CrossModal { grid } => commands::cross_modal(&cli.global, grid),
        Command::Simulate {
            alpha,
            rho,
            sweep,
            monte_carlo,
        } => commands::simulate(&cli.global, alpha.as_deref(), rho.as_deref(), *sweep, *monte_carlo),
        Command::BuildIdk {
            benchmark,
            k,
            n,
            temperature,
            top_p,
            field_map,
            resume,
        } => commands::build_idk(
            &cli.global,
            commands::BuildIdkArgs {
                benchmark,
                k: *k,
                n: *n,
                temperature: *temperature,
                top_p: *top_p,
                field_map: field_map.as_deref(),
                resume: resume.as_deref(),
            },
        ),
        Command::ExportSft { dataset, k, n } => commands::export_sft(&cli.global, dataset, *k, *n),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

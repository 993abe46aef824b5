use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use super::artifacts::{jsonl, pretty_json, read_outcomes, write_atomic, OutcomeRow, RunManifest};
use super::render::{
    cross_modal_json, cross_modal_markdown, gain_csv, gain_json, gain_markdown, percent_or_dash, reliability_csv, reliability_json,
    reliability_markdown, simulate_header, CrossCell, GainRow, ReliabilityRow, TotalMode,
};
use super::svg::{curve_svg, heatmap_svg, HeatCell};
use super::{CliError, GlobalArgs};
use crate::client::{connect, par_map, Backend, BackendFile, DecodeParams, ResponseCache};
use crate::dataset::{
    build_idk_dataset, collect_samples, export_sft as export_sft_records, idk_curve, load_benchmark_file, BenchmarkSet, FieldMap,
    IdkDataset, IdkThreshold, Modality, SampleSet, SamplingConfig,
};
use crate::metrics::{
    classify_outcome, gain_report, macro_gain, macro_report, reliability_report, simulate_uniform_rejection, tally, transition_matrix,
    uniform_rejection_closed_form, EvalRun, Fraction, GainReport, OutcomeLabel, ReliabilityCounts,
};
use crate::pipelines::{answer_question, Normalizer, PipelineKind, PipelineOptions};

fn total_mode(global: &GlobalArgs) -> TotalMode {
    if global.macro_total {
        TotalMode::Macro
    } else {
        TotalMode::Micro
    }
}

fn load_bench(path: &Path, field_map: Option<&Path>) -> Result<BenchmarkSet, CliError> {
    let map = match field_map {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => FieldMap::default(),
    };
    Ok(load_benchmark_file(path, &map)?)
}

/// The model under test, the optional normalizer model, and run settings.
struct Backends {
    model: Arc<dyn Backend>,
    normalizer: Option<Arc<dyn Backend>>,
    normalizer_decode: DecodeParams,
    decode: DecodeParams,
    max_concurrency: usize,
}

impl Backends {
    fn open(global: &GlobalArgs, manifest: &mut RunManifest) -> Result<Self, CliError> {
        let config_path = global
            .backend_config
            .as_deref()
            .ok_or_else(|| CliError::Usage("--backend-config is required for this command".into()))?;
        manifest.input("backend_config", config_path)?;
        let file = BackendFile::load(config_path)?;
        let cache = match &global.cache {
            Some(path) => Some(Arc::new(ResponseCache::open(path)?)),
            None => None,
        };
        let model = connect(&file.backend, cache.clone())?;
        let (normalizer, normalizer_decode) = match (&global.normalizer_config, global.no_llm_normalization) {
            (Some(path), false) => {
                manifest.input("normalizer_config", path)?;
                manifest.normalizer = Some(path.display().to_string());
                let n = BackendFile::load(path)?;
                (Some(connect(&n.backend, cache)?), n.decode)
            }
            _ => {
                manifest.normalizer = Some("rules-only".into());
                (None, DecodeParams::default())
            }
        };
        let max_concurrency = global.max_concurrency.unwrap_or_else(|| file.max_concurrency()).max(1);
        let mut decode = file.decode.clone();
        decode.seed.get_or_insert(global.seed);
        Ok(Backends {
            model,
            normalizer,
            normalizer_decode,
            decode,
            max_concurrency,
        })
    }

    fn normalizer(&self) -> Normalizer<'_> {
        let mut n = Normalizer::rules_only();
        n.backend = self.normalizer.as_deref();
        n.decode = self.normalizer_decode.clone();
        n
    }
}

fn write(out: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    write_atomic(&out.join(name), bytes.as_ref())
}

fn reliability_rows(scored: &[(Modality, OutcomeLabel)], mode: TotalMode) -> Result<Vec<ReliabilityRow>, CliError> {
    let mut rows = Vec::new();
    for m in Modality::ALL {
        let labels: Vec<OutcomeLabel> = scored.iter().filter(|(s, _)| *s == m).map(|(_, l)| *l).collect();
        if labels.is_empty() {
            continue;
        }
        let counts = tally(labels)?;
        rows.push(ReliabilityRow {
            slice: Some(m),
            counts,
            report: reliability_report(&counts)?,
        });
    }
    let pooled = rows.iter().fold(ReliabilityCounts::default(), |acc, r| acc + r.counts);
    let report = match mode {
        TotalMode::Micro => reliability_report(&pooled)?,
        TotalMode::Macro => macro_report(&rows.iter().map(|r| r.report.clone()).collect::<Vec<_>>())
            .ok_or_else(|| CliError::Completeness("no questions scored".into()))?,
    };
    rows.push(ReliabilityRow {
        slice: None,
        counts: pooled,
        report,
    });
    Ok(rows)
}

pub(super) fn evaluate(
    global: &GlobalArgs,
    benchmark: &Path,
    kind: PipelineKind,
    field_map: Option<&Path>,
    fewshot: Option<&Path>,
) -> Result<String, CliError> {
    let mode = total_mode(global);
    let mut manifest = RunManifest::new("evaluate", global);
    manifest.benchmark = Some(benchmark.display().to_string());
    manifest.pipeline = Some(kind.as_str().to_string());
    manifest.input("benchmark", benchmark)?;
    manifest
        .param("total", mode.as_str())
        .param("skip_unparseable", global.skip_unparseable);
    let bench = load_bench(benchmark, field_map)?;
    let fewshot_block = match fewshot {
        Some(p) => {
            manifest.input("fewshot", p)?;
            std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?.trim_end().to_string()
        }
        None => String::new(),
    };
    let backends = Backends::open(global, &mut manifest)?;
    let options = PipelineOptions {
        decode: backends.decode.clone(),
        fewshot_block,
    };
    let normalizer = backends.normalizer();
    let results = par_map(bench.records(), backends.max_concurrency, |_, q| {
        answer_question(backends.model.as_ref(), kind, q, &options, &normalizer)
    });

    let mut outcomes = Vec::new();
    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for (q, result) in bench.records().iter().zip(results) {
        match result {
            Ok((output, answer)) => {
                trace.extend(output.trace);
                if answer.is_unparseable() && global.skip_unparseable {
                    skipped.push(json!({"id": q.id, "reason": "unparseable"}));
                    continue;
                }
                let outcome = classify_outcome(&answer.value, &q.gold, &q.choices)?;
                outcomes.push(OutcomeRow {
                    id: q.id.clone(),
                    modality: q.modality,
                    raw: output.raw_answer,
                    normalized: answer.value,
                    outcome,
                });
            }
            Err(e) if global.skip_unparseable => skipped.push(json!({"id": q.id, "reason": e.to_string()})),
            Err(e) => failures.push(e),
        }
    }
    if let Some(first) = failures.first() {
        return Err(CliError::Completeness(format!(
            "{} of {} question(s) failed (first: {first}); rerun with --skip-unparseable to score the rest",
            failures.len(),
            bench.len()
        )));
    }
    if outcomes.is_empty() {
        return Err(CliError::Completeness("no questions scored".into()));
    }
    let scored: Vec<_> = outcomes.iter().map(|r| (r.modality, r.outcome)).collect();
    let rows = reliability_rows(&scored, mode)?;

    let out = &global.out;
    let digest = manifest.write(out)?;
    write(out, "outcomes.jsonl", jsonl(&outcomes))?;
    write(out, "trace.jsonl", jsonl(&trace))?;
    let report = json!({
        "manifest_digest": digest,
        "command": "evaluate",
        "pipeline": kind.as_str(),
        "total": mode.as_str(),
        "slices": reliability_json(&rows),
        "skipped": skipped,
    });
    write(out, "report.json", pretty_json(&report))?;
    write(out, "report.csv", reliability_csv(&rows, &digest))?;
    let mut md = reliability_markdown(kind.label(), &rows);
    if !skipped.is_empty() {
        md.push_str(&format!("\n{} question(s) skipped.\n", skipped.len()));
    }
    write(out, "report.md", format!("{md}\nmanifest: {digest}\n"))?;
    Ok(md)
}

/// Splits a paired run by the baseline's modality tags.
fn paired_runs(baseline: &[OutcomeRow], method: &[OutcomeRow], only: Option<Modality>) -> (EvalRun, EvalRun) {
    let ids: HashSet<&str> = baseline
        .iter()
        .filter(|r| only.is_none_or(|m| r.modality == m))
        .map(|r| r.id.as_str())
        .collect();
    let pick = |rows: &[OutcomeRow]| {
        rows.iter()
            .filter(|r| ids.contains(r.id.as_str()))
            .map(|r| (r.id.clone(), r.outcome))
            .collect::<EvalRun>()
    };
    (pick(baseline), pick(method))
}

fn slice_gain(baseline: &[OutcomeRow], method: &[OutcomeRow], slice: Option<Modality>, what: &str) -> Result<GainRow, CliError> {
    let (b, m) = paired_runs(baseline, method, slice);
    let matrix = transition_matrix(&b, &m).map_err(|e| CliError::Pairing(format!("{what}: {e}")))?;
    let report = gain_report(&matrix).map_err(|e| CliError::Pairing(format!("{what}: {e}")))?;
    Ok(GainRow { slice, matrix, report })
}

pub(super) fn gain(global: &GlobalArgs, baseline: &Path, method: &Path, label: &str) -> Result<String, CliError> {
    let mode = total_mode(global);
    let mut manifest = RunManifest::new("gain", global);
    manifest.input("baseline", baseline)?.input("method", method)?;
    manifest.param("total", mode.as_str()).param("label", label);
    let base_rows = read_outcomes(baseline)?;
    let method_rows = read_outcomes(method)?;

    let total = slice_gain(&base_rows, &method_rows, None, "total")?;
    let mut rows = Vec::new();
    for m in Modality::ALL {
        if base_rows.iter().any(|r| r.modality == m) {
            rows.push(slice_gain(&base_rows, &method_rows, Some(m), m.as_str())?);
        }
    }
    let total = match mode {
        TotalMode::Micro => total,
        TotalMode::Macro => GainRow {
            report: macro_gain(&rows.iter().map(|r| r.report.clone()).collect::<Vec<GainReport>>()).expect("at least one slice"),
            ..total
        },
    };
    rows.push(total);

    let out = &global.out;
    let digest = manifest.write(out)?;
    let report = json!({
        "manifest_digest": digest,
        "command": "gain",
        "label": label,
        "total": mode.as_str(),
        "slices": gain_json(&rows),
    });
    write(out, "report.json", pretty_json(&report))?;
    write(out, "report.csv", gain_csv(&rows, &digest))?;
    let md = gain_markdown(label, &rows);
    write(out, "report.md", format!("{md}\nmanifest: {digest}\n"))?;
    Ok(md)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridCell {
    train: Modality,
    test: Modality,
    baseline: PathBuf,
    method: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    cells: Vec<GridCell>,
}

pub(super) fn cross_modal(global: &GlobalArgs, grid: &Path) -> Result<String, CliError> {
    let mut manifest = RunManifest::new("cross-modal", global);
    manifest.input("grid", grid)?;
    let text = std::fs::read_to_string(grid).map_err(|e| CliError::io(grid, e))?;
    let file: GridFile = serde_json::from_str(&text).map_err(|e| CliError::Ingestion(format!("{}: {e}", grid.display())))?;
    let base_dir = grid.parent().unwrap_or(Path::new(""));

    let mut seen = BTreeSet::new();
    for c in &file.cells {
        if !seen.insert((c.train, c.test)) {
            return Err(CliError::Ingestion(format!(
                "grid lists (train={}, test={}) twice",
                c.train.as_str(),
                c.test.as_str()
            )));
        }
    }
    let trains: BTreeSet<Modality> = file.cells.iter().map(|c| c.train).collect();
    let tests: BTreeSet<Modality> = file.cells.iter().map(|c| c.test).collect();
    for &train in &trains {
        for &test in &tests {
            if train != test && !seen.contains(&(train, test)) {
                return Err(CliError::Completeness(format!(
                    "grid is missing cell (train={}, test={})",
                    train.as_str(),
                    test.as_str()
                )));
            }
        }
    }

    let mut cells = Vec::new();
    for c in &file.cells {
        let what = format!("cell (train={}, test={})", c.train.as_str(), c.test.as_str());
        let (bp, mp) = (base_dir.join(&c.baseline), base_dir.join(&c.method));
        manifest.input(&format!("{}_{}_baseline", c.train.as_str(), c.test.as_str()), &bp)?;
        manifest.input(&format!("{}_{}_method", c.train.as_str(), c.test.as_str()), &mp)?;
        let (base_rows, method_rows) = (read_outcomes(&bp)?, read_outcomes(&mp)?);
        if !base_rows.iter().any(|r| r.modality == c.test) {
            return Err(CliError::Pairing(format!("{what}: baseline has no {} questions", c.test.as_str())));
        }
        let row = slice_gain(&base_rows, &method_rows, Some(c.test), &what)?;
        cells.push(CrossCell {
            train: c.train,
            test: c.test,
            report: row.report,
        });
    }
    cells.sort_by_key(|c| (c.train, c.test));
    let off_diagonal: Vec<&CrossCell> = cells.iter().filter(|c| c.train != c.test).collect();
    let meta = !off_diagonal.is_empty() && off_diagonal.iter().all(|c| c.report.rgi.is_positive());
    let check = format!(
        "meta ability: {} ({} of {} off-diagonal RGI > 0)\n",
        if meta { "yes" } else { "no" },
        off_diagonal.iter().filter(|c| c.report.rgi.is_positive()).count(),
        off_diagonal.len()
    );

    let out = &global.out;
    let digest = manifest.write(out)?;
    let matrix = json!({
        "manifest_digest": digest,
        "command": "cross-modal",
        "cells": cross_modal_json(&cells),
        "meta_ability": meta,
    });
    write(out, "matrix.json", pretty_json(&matrix))?;
    let heat: Vec<HeatCell> = cells.iter().map(HeatCell::from).collect();
    write(out, "matrix.svg", heatmap_svg(&heat, &digest))?;
    let md = format!("{}\n{check}", cross_modal_markdown(&cells));
    write(out, "report.md", format!("{md}\nmanifest: {digest}\n"))?;
    Ok(md)
}

fn parse_unit(name: &str, text: &str) -> Result<Fraction, CliError> {
    let value = Fraction::parse_decimal(text).ok_or_else(|| CliError::Usage(format!("--{name}: {text:?} is not a decimal number")))?;
    if value.is_negative() || value > Fraction::one() {
        return Err(CliError::Usage(format!("--{name} must lie in [0, 1], got {text}")));
    }
    Ok(value)
}

pub(super) fn simulate(
    global: &GlobalArgs,
    alpha: Option<&str>,
    rho: Option<&str>,
    sweep: bool,
    monte_carlo: Option<u64>,
) -> Result<String, CliError> {
    let points: Vec<(Fraction, Fraction)> = if sweep {
        (1..=9u64)
            .flat_map(|a| (1..=19u64).map(move |r| (Fraction::new(a, 10), Fraction::new(r, 20))))
            .collect()
    } else {
        let a = parse_unit("alpha", alpha.ok_or_else(|| CliError::Usage("--alpha is required".into()))?)?;
        let r = parse_unit("rho", rho.ok_or_else(|| CliError::Usage("--rho is required".into()))?)?;
        vec![(a, r)]
    };
    if monte_carlo == Some(0) {
        return Err(CliError::Usage("--monte-carlo needs at least one answer".into()));
    }
    let mut manifest = RunManifest::new("simulate", global);
    manifest.param("sweep", sweep);
    if let (Some(a), Some(r)) = (alpha, rho) {
        manifest.param("alpha", a).param("rho", r);
    }
    if let Some(n) = monte_carlo {
        manifest.param("monte_carlo", n);
    }

    let mut table = Vec::new();
    for (a, r) in &points {
        let closed = uniform_rejection_closed_form(a, r)?;
        let mc = match monte_carlo {
            Some(n) => {
                let correct = (a * &Fraction::from_integer(n)).to_f64().round() as u64;
                let counts = ReliabilityCounts::new(correct, 0, n - correct);
                Some(simulate_uniform_rejection(&counts, r, global.seed)?.reliability)
            }
            None => None,
        };
        table.push((closed, mc));
    }

    let header = simulate_header(monte_carlo.is_some());
    let cells = |(o, mc): &(crate::metrics::UniformRejectionOutcome, Option<Fraction>)| {
        let mut v = vec![
            o.alpha.to_fixed(2),
            o.rho.to_fixed(2),
            o.acc_new.percent(),
            o.rej_new.percent(),
            o.tru_new.percent(),
            o.rel_new.percent(),
            o.rel_org.percent(),
            o.deceptive.to_string(),
        ];
        if monte_carlo.is_some() {
            v.push(percent_or_dash(mc.as_ref()));
        }
        v
    };

    let out = &global.out;
    let digest = manifest.write(out)?;
    let mut csv = format!("{},manifest_digest\n", header.join(","));
    let mut md = format!("| {} |\n|{}\n", header.join(" | "), "---:|".repeat(header.len()));
    let mut rows_json = Vec::new();
    for row in &table {
        let c = cells(row);
        csv.push_str(&format!("{},{digest}\n", c.join(",")));
        md.push_str(&format!("| {} |\n", c.join(" | ")));
        let obj: serde_json::Map<String, Value> = header
            .iter()
            .zip(&c)
            .map(|(k, v)| (k.to_string(), serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()))))
            .collect();
        rows_json.push(Value::Object(obj));
    }
    let deceptive = table.iter().filter(|(o, _)| o.deceptive).count();
    md.push_str(&format!(
        "\n{deceptive} of {} point(s) in the deceptive region (0 < rho < 1 - alpha).\n",
        table.len()
    ));
    write(out, "report.csv", &csv)?;
    write(
        out,
        "report.json",
        pretty_json(&json!({"manifest_digest": digest, "command": "simulate", "rows": rows_json})),
    )?;
    write(out, "report.md", format!("{md}\nmanifest: {digest}\n"))?;
    Ok(md)
}

pub(super) struct BuildIdkArgs<'a> {
    pub benchmark: &'a Path,
    pub k: usize,
    pub n: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub field_map: Option<&'a Path>,
    pub resume: Option<&'a Path>,
}

fn read_samples(path: &Path) -> Result<BTreeMap<String, SampleSet>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let set: SampleSet = serde_json::from_str(line).map_err(|e| CliError::Ingestion(format!("{}:{}: {e}", path.display(), i + 1)))?;
        map.insert(set.question_id.clone(), set);
    }
    Ok(map)
}

pub(super) fn build_idk(global: &GlobalArgs, args: BuildIdkArgs<'_>) -> Result<String, CliError> {
    let threshold = IdkThreshold::new(args.k, args.n).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut manifest = RunManifest::new("build-idk", global);
    manifest.benchmark = Some(args.benchmark.display().to_string());
    manifest.input("benchmark", args.benchmark)?;
    manifest
        .param("threshold", threshold)
        .param("temperature", args.temperature)
        .param("top_p", args.top_p);
    let bench = load_bench(args.benchmark, args.field_map)?;
    let resume = match args.resume {
        Some(p) => {
            manifest.input("resume", p)?;
            read_samples(p)?
        }
        None => BTreeMap::new(),
    };
    let backends = Backends::open(global, &mut manifest)?;
    let mut config = SamplingConfig::new(args.n, global.seed, args.temperature, args.top_p);
    config.max_tokens = backends.decode.max_tokens;
    let out = &global.out;

    let samples = match collect_samples(
        backends.model.as_ref(),
        &bench,
        &config,
        &backends.normalizer(),
        resume,
        backends.max_concurrency,
    ) {
        Ok(s) => s,
        Err(partial) => {
            write(out, "samples.jsonl", jsonl(partial.completed.values()))?;
            return Err(CliError::Completeness(format!(
                "{partial}; {} finished question(s) saved to {}, pass it to --resume",
                partial.completed.len(),
                out.join("samples.jsonl").display()
            )));
        }
    };
    let dataset = build_idk_dataset(&bench, &samples, threshold)?;
    let curve = idk_curve(&bench, &samples, args.n)?;
    if curve.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(CliError::Internal("IDK curve is not monotone in k".into()));
    }

    let digest = manifest.write(out)?;
    write(out, "samples.jsonl", jsonl(samples.values()))?;
    let mut data = Vec::new();
    dataset
        .write_jsonl(&mut data)
        .map_err(|e| CliError::io(&out.join("idk_dataset.jsonl"), e))?;
    write(out, "idk_dataset.jsonl", data)?;
    let mut csv = String::from("k,n,idk_fraction,manifest_digest\n");
    for (k, f) in &curve {
        csv.push_str(&format!("{k},{},{},{digest}\n", args.n, f.percent()));
    }
    write(out, "curve.csv", csv)?;
    write(out, "curve.svg", curve_svg(&curve, &digest))?;
    let curve_json: Vec<Value> = curve
        .iter()
        .map(|(k, f)| json!({"k": k, "idk_fraction": serde_json::from_str::<Value>(&f.percent()).expect("number")}))
        .collect();
    write(
        out,
        "report.json",
        pretty_json(&json!({
            "manifest_digest": digest,
            "command": "build-idk",
            "threshold": threshold.to_string(),
            "n_questions": dataset.len(),
            "idk_count": dataset.idk_count(),
            "idk_fraction": serde_json::from_str::<Value>(&dataset.idk_fraction.percent()).expect("number"),
            "curve": curve_json,
        })),
    )?;
    let mut md = format!(
        "IDK dataset at {threshold}: {} of {} question(s) relabelled IDK ({}%).\n\n| k | IDK % |\n|---:|---:|\n",
        dataset.idk_count(),
        dataset.len(),
        dataset.idk_fraction.percent()
    );
    for (k, f) in &curve {
        md.push_str(&format!("| {k} | {} |\n", f.percent()));
    }
    write(out, "report.md", format!("{md}\nmanifest: {digest}\n"))?;
    Ok(md)
}

pub(super) fn export_sft(global: &GlobalArgs, dataset: &Path, k: usize, n: usize) -> Result<String, CliError> {
    let threshold = IdkThreshold::new(k, n).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut manifest = RunManifest::new("export-sft", global);
    manifest.input("dataset", dataset)?;
    manifest.param("threshold", threshold);
    let file = std::fs::File::open(dataset).map_err(|e| CliError::io(dataset, e))?;
    let data = IdkDataset::read_jsonl(BufReader::new(file), threshold)?;
    let mut records = Vec::new();
    let count = export_sft_records(&data, &mut records)?;
    let out = &global.out;
    manifest.write(out)?;
    write(out, "sft.jsonl", records)?;
    Ok(format!("wrote {count} record(s) to {}\n", out.join("sft.jsonl").display()))
}

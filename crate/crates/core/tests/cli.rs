mod common;

use std::path::Path;

use serde_json::Value;

use common::{assert_success, phrase, question, run_cli, write_outcomes, Fixture, Intent};
use idk_bench::cli::heatmap_color;
use idk_bench::dataset::Modality;
use idk_bench::metrics::Rgi;
use idk_bench::pipelines::PipelineKind;

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn slice<'a>(report: &'a Value, key: &str) -> &'a Value {
    report["slices"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["slice"] == key)
        .unwrap_or_else(|| panic!("no slice {key}"))
}

fn evaluate_args<'a>(pipeline: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "evaluate",
        "--benchmark",
        "benchmark.jsonl",
        "--pipeline",
        pipeline,
        "--backend-config",
        "backend.json",
        "--normalizer-config",
        "judge.json",
        "--out",
        out,
    ]
}

/// Sound questions where the IDK pipeline answers the first `nc` correctly,
/// refuses the next `nr`, and gets the rest wrong.
fn sound_fixture(dir: &Path, nc: usize, nr: usize, nw: usize) -> Fixture {
    let questions: Vec<_> = (0..nc + nr + nw).map(|i| question(i, Modality::Sound)).collect();
    let fixture = Fixture::create(dir, &questions);
    let intent = move |_: usize, i: usize| match i {
        i if i < nc => Intent::Correct,
        i if i < nc + nr => Intent::Refuse,
        _ => Intent::Wrong,
    };
    fixture.record_pipelines(&questions, &[PipelineKind::IdkPrompting], move |r| {
        common::model_reply_with(r, intent)
    });
    fixture
}

#[test]
fn evaluate_reproduces_sound_row() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = sound_fixture(dir.path(), 194, 60, 79);
    assert_success(&fixture.run(&evaluate_args("idk-prompting", "out")));
    let report = read_json(&dir.path().join("out/report.json"));
    let sound = slice(&report, "sound");
    assert_eq!(sound["n"], 333);
    assert_eq!(sound["accuracy"], serde_json::json!(58.26));
    assert_eq!(sound["truthfulness"], serde_json::json!(76.28));
    assert_eq!(sound["reliability"], serde_json::json!(73.03));
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("| 58.26 | 76.28 | 73.03 |"), "{md}");
}

#[test]
fn all_correct_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = sound_fixture(dir.path(), 12, 0, 0);
    assert_success(&fixture.run(&evaluate_args("idk-prompting", "out")));
    let total = slice(&read_json(&dir.path().join("out/report.json")), "total").clone();
    for key in ["accuracy", "truthfulness", "reliability"] {
        assert_eq!(total[key], serde_json::json!(100.0), "{key}");
    }
}

fn hermetic(dir: &Path) -> Fixture {
    let questions = common::hermetic_questions();
    let fixture = Fixture::create(dir, &questions);
    fixture.record_pipelines(&questions, &PipelineKind::ALL, common::hermetic_model_reply);
    fixture
}

#[test]
fn pooled_total_matches_retally_and_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = hermetic(dir.path());
    assert_success(&fixture.run(&evaluate_args("mcot", "out")));
    let out = dir.path().join("out");

    let rows: Vec<Value> = std::fs::read_to_string(out.join("outcomes.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 24);
    let count = |label: &str| rows.iter().filter(|r| r["outcome"] == label).count() as u64;
    let report = read_json(&out.join("report.json"));
    let total = slice(&report, "total");
    assert_eq!(total["n_correct"], count("correct"));
    assert_eq!(total["n_rejected"], count("rejected"));
    assert_eq!(total["n_wrong"], count("wrong"));
    let per_slice: u64 = ["sound", "music", "speech"]
        .iter()
        .map(|m| slice(&report, m)["n"].as_u64().unwrap())
        .sum();
    assert_eq!(per_slice, 24);

    let digest = read_json(&out.join("manifest.json"))["digest"].as_str().unwrap().to_string();
    assert_eq!(report["manifest_digest"], digest.as_str());
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains(&digest));
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let json = slice(&report, f[0]);
        for (col, key) in [(5, "accuracy"), (6, "truthfulness"), (7, "rejection_rate"), (8, "reliability")] {
            assert_eq!(f[col].parse::<f64>().unwrap(), json[key].as_f64().unwrap(), "{} {key}", f[0]);
        }
        assert_eq!(f[9], digest);
        let cells = format!("| {} | {} | {} |", f[5], f[6], f[8]);
        assert!(md.contains(&cells), "{cells} missing from\n{md}");
    }
}

#[test]
fn macro_total_averages_slices() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = hermetic(dir.path());
    let mut args = evaluate_args("task-agent", "out");
    args.push("--macro");
    assert_success(&fixture.run(&args));
    let report = read_json(&dir.path().join("out/report.json"));
    assert_eq!(report["total"], "macro");
    let mean: f64 = ["sound", "music", "speech"]
        .iter()
        .map(|m| slice(&report, m)["accuracy"].as_f64().unwrap())
        .sum::<f64>()
        / 3.0;
    let total = slice(&report, "total")["accuracy"].as_f64().unwrap();
    assert!((total - mean).abs() <= 0.005 + 1e-9, "{total} vs {mean}");
}

#[test]
fn missing_recording_is_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let questions = common::hermetic_questions();
    let fixture = Fixture::create(dir.path(), &questions);
    fixture.record_pipelines(&questions[..20], &[PipelineKind::Baseline], common::hermetic_model_reply);
    let out = fixture.run(&evaluate_args("baseline", "out"));
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));

    let mut args = evaluate_args("baseline", "skipped");
    args.push("--skip-unparseable");
    assert_success(&fixture.run(&args));
    let report = read_json(&dir.path().join("skipped/report.json"));
    assert_eq!(report["skipped"].as_array().unwrap().len(), 4);
    assert_eq!(slice(&report, "total")["n"], 20);
}

/// `nc` baseline-correct and `nw` baseline-wrong answers; the method rejects
/// `cr` of the former and `wr` of the latter and leaves the rest unchanged.
fn gain_pair(dir: &Path, tag: &str, modality: Modality, nc: usize, nw: usize, cr: usize, wr: usize) -> (String, String) {
    let mut base = Vec::new();
    let mut method = Vec::new();
    for i in 0..nc + nw {
        let id = format!("{tag}-{i:05}");
        let correct = i < nc;
        let rejected = if correct { i < cr } else { i - nc < wr };
        let b = if correct { "correct" } else { "wrong" };
        base.push((id.clone(), modality, b));
        method.push((id, modality, if rejected { "rejected" } else { b }));
    }
    let (bp, mp) = (format!("{tag}-baseline.jsonl"), format!("{tag}-method.jsonl"));
    write_outcomes(&dir.join(&bp), &base);
    write_outcomes(&dir.join(&mp), &method);
    (bp, mp)
}

#[test]
fn gain_reproduces_total_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (base, method) = gain_pair(dir.path(), "agent", Modality::Music, 500, 500, 51, 86);
    assert_success(&run_cli(
        dir.path(),
        &[
            "gain",
            "--baseline",
            &base,
            "--method",
            &method,
            "--label",
            "Task Agent",
            "--out",
            "out",
        ],
    ));
    let report = read_json(&dir.path().join("out/report.json"));
    let total = slice(&report, "total");
    assert_eq!(total["delta_con"], serde_json::json!(10.2));
    assert_eq!(total["delta_hum"], serde_json::json!(17.2));
    assert_eq!(format!("{:.2}", total["rgi"].as_f64().unwrap()), "0.23");
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("Task Agent") && md.contains("| 10.20 | 17.20 | 0.23 |"), "{md}");
}

#[test]
fn identical_runs_have_undefined_gain() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = gain_pair(dir.path(), "same", Modality::Speech, 10, 10, 0, 0);
    assert_success(&run_cli(
        dir.path(),
        &["gain", "--baseline", &base, "--method", &base, "--out", "out"],
    ));
    let report = read_json(&dir.path().join("out/report.json"));
    assert_eq!(slice(&report, "total")["rgi"], "undef");
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("undef"));
}

#[test]
fn gain_pairing_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = gain_pair(dir.path(), "a", Modality::Sound, 5, 5, 0, 0);
    let (_, other) = gain_pair(dir.path(), "b", Modality::Sound, 5, 5, 1, 1);
    let out = run_cli(dir.path(), &["gain", "--baseline", &base, "--method", &other, "--out", "out"]);
    assert_eq!(out.status.code(), Some(5));
    // A baseline containing rejections is not a valid reference.
    let (_, with_rejections) = gain_pair(dir.path(), "a", Modality::Sound, 5, 5, 1, 1);
    let out = run_cli(
        dir.path(),
        &["gain", "--baseline", &with_rejections, "--method", &base, "--out", "out"],
    );
    assert_eq!(out.status.code(), Some(5));
}

const TABLE10: [(&str, &str, usize, usize, &str); 6] = [
    ("sound", "music", 1557, 2395, "0.19"),
    ("sound", "speech", 1231, 2102, "0.23"),
    ("music", "sound", 631, 1441, "0.36"),
    ("music", "speech", 1081, 1532, "0.15"),
    ("speech", "sound", 751, 1682, "0.35"),
    ("speech", "music", 988, 1826, "0.27"),
];

fn write_grid(dir: &Path, cells: &[(&str, &str, usize, usize)]) {
    let mut json = Vec::new();
    for (train, test, cr, wr) in cells {
        let tag = format!("{train}-{test}");
        let (b, m) = gain_pair(dir, &tag, test.parse().unwrap(), 10_000, 10_000, *cr, *wr);
        json.push(serde_json::json!({"train": train, "test": test, "baseline": b, "method": m}));
    }
    std::fs::write(dir.join("grid.json"), serde_json::json!({ "cells": json }).to_string()).unwrap();
}

#[test]
fn cross_modal_reproduces_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let cells: Vec<_> = TABLE10.iter().map(|(a, b, c, w, _)| (*a, *b, *c, *w)).collect();
    write_grid(dir.path(), &cells);
    assert_success(&run_cli(dir.path(), &["cross-modal", "--grid", "grid.json", "--out", "out"]));
    let matrix = read_json(&dir.path().join("out/matrix.json"));
    for (train, test, _, _, rgi) in TABLE10 {
        let cell = matrix["cells"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["train"] == train && c["test"] == test)
            .unwrap();
        assert_eq!(format!("{:.2}", cell["rgi"].as_f64().unwrap()), rgi, "{train}->{test}");
    }
    assert_eq!(matrix["meta_ability"], true);
    let svg = std::fs::read_to_string(dir.path().join("out/matrix.svg")).unwrap();
    for (.., rgi) in TABLE10 {
        assert!(svg.contains(&format!(">{rgi}<")), "{rgi}");
    }
    assert_eq!(svg.matches(">n/a<").count(), 3, "diagonal left empty");
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("meta ability: yes (6 of 6 off-diagonal RGI > 0)"), "{md}");

    assert_success(&run_cli(dir.path(), &["cross-modal", "--grid", "grid.json", "--out", "out"]));
    assert_eq!(svg, std::fs::read_to_string(dir.path().join("out/matrix.svg")).unwrap());
}

#[test]
fn negative_cell_uses_cold_side() {
    let dir = tempfile::tempdir().unwrap();
    let mut cells: Vec<_> = TABLE10.iter().map(|(a, b, c, w, _)| (*a, *b, *c, *w)).collect();
    cells[0] = ("sound", "music", 2000, 1000);
    write_grid(dir.path(), &cells);
    assert_success(&run_cli(dir.path(), &["cross-modal", "--grid", "grid.json", "--out", "out"]));
    let matrix = read_json(&dir.path().join("out/matrix.json"));
    assert_eq!(matrix["meta_ability"], false);
    let value = matrix["cells"][0]["rgi"].as_f64().unwrap();
    assert!(value < 0.0);
    let svg = std::fs::read_to_string(dir.path().join("out/matrix.svg")).unwrap();
    // Sound row, Music column.
    let rect = svg.lines().find(|l| l.starts_with("<rect x=\"220\" y=\"60\"")).unwrap();
    let color = &rect[rect.find("fill=\"#").unwrap() + 6..][..7];
    let channel = |i: usize| u8::from_str_radix(&color[i..i + 2], 16).unwrap();
    assert!(channel(5) > channel(1), "{color}");
    assert_eq!(color, heatmap_color(&Rgi::Finite((1000.0f64 / 2000.0).log10())));
}

#[test]
fn missing_grid_cell_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cells: Vec<_> = TABLE10.iter().skip(1).map(|(a, b, c, w, _)| (*a, *b, *c, *w)).collect();
    write_grid(dir.path(), &cells);
    let out = run_cli(dir.path(), &["cross-modal", "--grid", "grid.json", "--out", "out"]);
    assert_eq!(out.status.code(), Some(6));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sound") && err.contains("music"), "{err}");
}

#[test]
fn simulate_worked_example_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["simulate", "--alpha", "0.5", "--rho", "0.2", "--out", "a"]);
    assert_success(&out);
    let row = &read_json(&dir.path().join("a/report.json"))["rows"][0];
    assert_eq!(row["rel_new"], serde_json::json!(56.0));
    assert_eq!(row["deceptive"], true);

    assert_success(&run_cli(
        dir.path(),
        &["simulate", "--alpha", "0.5", "--rho", "0.5", "--monte-carlo", "1000", "--out", "b"],
    ));
    let row = &read_json(&dir.path().join("b/report.json"))["rows"][0];
    assert_eq!(row["rel_new"], serde_json::json!(50.0));
    assert_eq!(row["rel_org"], serde_json::json!(50.0));
    assert_eq!(row["deceptive"], false);
    assert!(row["rel_monte_carlo"].is_number());

    let out = run_cli(dir.path(), &["simulate", "--alpha", "1.5", "--rho", "0.2", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_sweep_sign_law() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_cli(dir.path(), &["simulate", "--sweep", "--out", "out"]));
    let rows = read_json(&dir.path().join("out/report.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 9 * 19);
    for row in rows {
        let (a, r) = (row["alpha"].as_f64().unwrap(), row["rho"].as_f64().unwrap());
        let gap = row["rel_new"].as_f64().unwrap() - 100.0 * a;
        // Grid points are multiples of 0.05, so the boundary test is exact in hundredths.
        let boundary = 100 - (a * 100.0).round() as i64 - (r * 100.0).round() as i64;
        let expected = boundary.signum();
        let got = if gap.abs() < 1e-9 { 0 } else { gap.signum() as i64 };
        assert_eq!(got, expected, "alpha {a} rho {r}");
        assert_eq!(row["deceptive"], boundary > 0);
    }
}

/// Ten questions answered correctly in every round except round 2 of the
/// first three.
fn sampling_fixture(dir: &Path, record: std::ops::Range<usize>) -> Fixture {
    let questions: Vec<_> = (0..10).map(|i| question(i, Modality::ALL[i % 3])).collect();
    let fixture = Fixture::create(dir, &questions);
    fixture.record_sampling(&questions[record], 5, |r| {
        let (i, modality) = common::parse_audio(r.messages[0].audio_ref.as_deref().unwrap());
        let intent = if i < 3 && r.decode.seed == Some(2) {
            Intent::Wrong
        } else {
            Intent::Correct
        };
        phrase(intent, i, modality, 0)
    });
    fixture
}

fn build_idk(fixture: &Fixture, k: &str, out: &str, extra: &[&str]) -> std::process::Output {
    let mut args = vec![
        "build-idk",
        "--benchmark",
        "benchmark.jsonl",
        "--backend-config",
        "backend.json",
        "--k",
        k,
        "--n",
        "5",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    fixture.run(&args)
}

#[test]
fn build_idk_threshold_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = sampling_fixture(dir.path(), 0..10);
    assert_success(&build_idk(&fixture, "5", "five", &[]));
    let report = read_json(&dir.path().join("five/report.json"));
    assert_eq!(report["idk_fraction"], serde_json::json!(30.0));
    assert_eq!(report["idk_count"], 3);
    let curve = std::fs::read_to_string(dir.path().join("five/curve.csv")).unwrap();
    let values: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values, vec![0.0, 0.0, 0.0, 0.0, 0.0, 30.0]);
    assert!(std::fs::read_to_string(dir.path().join("five/curve.svg"))
        .unwrap()
        .contains("<polyline"));

    assert_success(&build_idk(&fixture, "0", "zero", &[]));
    assert_eq!(
        read_json(&dir.path().join("zero/report.json"))["idk_fraction"],
        serde_json::json!(0.0)
    );

    assert_success(&fixture.run(&["export-sft", "--dataset", "five/idk_dataset.jsonl", "--out", "sft"]));
    let sft = std::fs::read_to_string(dir.path().join("sft/sft.jsonl")).unwrap();
    assert_eq!(sft.lines().count(), 10);
    let idk_targets = sft.lines().filter(|l| l.contains("IDK")).count();
    assert!(idk_targets >= 3, "{sft}");
}

#[test]
fn build_idk_resumes_after_interruption() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = sampling_fixture(dir.path(), 0..6);
    let out = build_idk(&fixture, "5", "out", &[]);
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resume"));
    let partial = std::fs::read_to_string(dir.path().join("out/samples.jsonl")).unwrap();
    assert_eq!(partial.lines().count(), 6);

    // Finish recording the remaining questions, then continue.
    let questions: Vec<_> = (0..10).map(|i| question(i, Modality::ALL[i % 3])).collect();
    fixture.record_sampling(&questions[6..], 5, |r| {
        let (i, modality) = common::parse_audio(r.messages[0].audio_ref.as_deref().unwrap());
        phrase(Intent::Correct, i, modality, 0)
    });
    assert_success(&build_idk(&fixture, "5", "out", &["--resume", "out/samples.jsonl"]));
    assert_success(&build_idk(&fixture, "5", "fresh", &[]));
    for file in ["samples.jsonl", "idk_dataset.jsonl", "curve.csv"] {
        let resumed = std::fs::read_to_string(dir.path().join("out").join(file)).unwrap();
        let fresh = std::fs::read_to_string(dir.path().join("fresh").join(file)).unwrap();
        if file == "curve.csv" {
            // The manifest records the resume input, so only the digest column differs.
            let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
            assert_eq!(strip(&resumed), strip(&fresh));
        } else {
            assert_eq!(resumed, fresh, "{file}");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = hermetic(dir.path());

    let out = fixture.run(&evaluate_args("chain-of-thought", "out"));
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("broken.jsonl"), "{\"id\": \"x\", \"question\": 3}\n").unwrap();
    let out = fixture.run(&[
        "evaluate",
        "--benchmark",
        "broken.jsonl",
        "--pipeline",
        "baseline",
        "--backend-config",
        "backend.json",
        "--out",
        "out",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(
        dir.path().join("bad-backend.json"),
        r#"{"backend": {"kind": "replay", "recording": "nowhere.jsonl", "model_name": "m"}}"#,
    )
    .unwrap();
    let out = fixture.run(&[
        "evaluate",
        "--benchmark",
        "benchmark.jsonl",
        "--pipeline",
        "baseline",
        "--backend-config",
        "bad-backend.json",
        "--out",
        "out",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(
        dir.path().join("bad.jsonl"),
        "{\"id\": \"q\", \"modality\": \"sound\", \"outcome\": \"maybe\"}\n",
    )
    .unwrap();
    let out = fixture.run(&["gain", "--baseline", "bad.jsonl", "--method", "bad.jsonl", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));

    let out = fixture.run(&["gain", "--baseline", "absent.jsonl", "--method", "absent.jsonl", "--out", "out"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = hermetic(dir.path());
    assert_success(&fixture.run(&evaluate_args("baseline", "a")));
    assert_success(&fixture.run(&evaluate_args("baseline", "a2")));
    let a = read_json(&dir.path().join("a/manifest.json"));
    let b = read_json(&dir.path().join("a2/manifest.json"));
    assert_eq!(a["timestamp"], b["timestamp"]);
    assert_eq!(a["pipeline"], "baseline");
    assert_eq!(a["seed"], 0);
    use sha2::Digest;
    let sha = hex::encode(sha2::Sha256::digest(std::fs::read(&fixture.benchmark).unwrap()));
    assert!(a["inputs"].to_string().contains(&sha), "{}", a["inputs"]);
    assert_ne!(a["digest"], b["digest"], "output directory is part of the manifest");
}

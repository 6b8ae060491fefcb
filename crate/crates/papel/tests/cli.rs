//! End-to-end tests of the `papel` binary: exit codes, golden stdout, and
//! the full annotate / evaluate / compare / contradict pipeline against the
//! bundled fixture corpus with the rule-stub backend.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn papel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_papel"))
}

fn workspace_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixture").join(rel)
}

fn stdout_json(output: &Output) -> Value {
    let text = String::from_utf8_lossy(&output.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| {
        panic!("stdout is not one JSON document ({e}): {text:?}")
    })
}

fn stderr_error(output: &Output) -> Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| {
        panic!("stderr last line is not JSON ({e}): {text:?}")
    })
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn help_and_version_exit_zero() {
    assert_success(&papel().arg("--help").output().unwrap());
    assert_success(&papel().arg("--version").output().unwrap());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let output = papel().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn ingest_reports_identical_corpora_for_both_formats() {
    let json = papel()
        .args(["ingest", "--root"])
        .arg(fixture_path("corpus.json"))
        .args(["--format", "json", "--agreement"])
        .output()
        .unwrap();
    assert_success(&json);
    let json_doc = stdout_json(&json);

    let opp = papel()
        .args(["ingest", "--root"])
        .arg(fixture_path("opp115"))
        .args(["--format", "opp115"])
        .output()
        .unwrap();
    assert_success(&opp);
    let opp_doc = stdout_json(&opp);

    for doc in [&json_doc, &opp_doc] {
        assert_eq!(doc["summary"]["policies"], 3);
        assert_eq!(doc["summary"]["segments"], 12);
        assert_eq!(doc["summary"]["annotators"], 3);
    }
    assert_eq!(json_doc["content_hash"], opp_doc["content_hash"]);
    assert!(json_doc["content_hash"].as_str().unwrap().len() == 64);

    // Agreement was requested only for the json run: two perfect
    // annotators, one at 5/6.
    let per = &json_doc["agreement"]["per_annotator"];
    assert_eq!(per["ann_a"], 1.0);
    assert_eq!(per["ann_b"], 1.0);
    assert_eq!(per["ann_c"], 5.0 / 6.0);
    // Mean of rounded doubles: allow the last ulp to differ from the
    // exact rational 17/18.
    let mean = json_doc["agreement"]["mean_f1"].as_f64().unwrap();
    assert!((mean - 17.0 / 18.0).abs() <= 1e-12, "mean_f1 = {mean}");
}

#[test]
fn prompts_render_reproduces_the_golden_files() {
    for id in ["annotation.I", "annotation.IV"] {
        let output = papel()
            .args(["prompts", "render", "--template", id])
            .output()
            .unwrap();
        assert_success(&output);
        let golden = std::fs::read(workspace_path(&format!("prompts/golden/{id}.txt"))).unwrap();
        assert_eq!(
            output.stdout, golden,
            "stdout for {id} is not byte-identical to the golden file"
        );
    }

    // Bare numerals resolve to the built-in annotation prompts, and `--id`
    // is an alias for `--template`.
    let bare = papel()
        .args(["prompts", "render", "--id", "I"])
        .output()
        .unwrap();
    assert_success(&bare);
    let golden = std::fs::read(workspace_path("prompts/golden/annotation.I.txt")).unwrap();
    assert_eq!(bare.stdout, golden);
}

#[test]
fn prompts_list_names_all_eleven_templates() {
    let output = papel().args(["prompts", "list"]).output().unwrap();
    assert_success(&output);
    let text = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    for id in [
        "annotation.I",
        "annotation.V",
        "annotation.VII",
        "contradiction.VIII",
        "contradiction.XI",
    ] {
        assert!(
            lines.iter().any(|l| l.starts_with(&format!("{id}\t"))),
            "missing {id} in listing:\n{text}"
        );
    }
}

fn write_run_config(
    path: &Path,
    corpus_root: &Path,
    template_id: &str,
    output_dir: &Path,
    model: Value,
) {
    let config = serde_json::json!({
        "corpus": { "root": corpus_root, "format": "json" },
        "template_id": template_id,
        "model": model,
        "output_dir": output_dir,
    });
    std::fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

fn stub_model() -> Value {
    serde_json::json!({ "backend": "rule_stub", "model_name": "rule-stub" })
}

#[test]
fn pipeline_annotate_evaluate_compare_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    let runs_dir = dir.path().join("runs");
    write_run_config(
        &config_path,
        &fixture_path("corpus.json"),
        "annotation.I",
        &runs_dir,
        stub_model(),
    );

    // Annotate twice under different run ids (for the comparison below).
    for run_id in ["base", "again"] {
        let output = papel()
            .args(["annotate", "--config"])
            .arg(&config_path)
            .args(["--run-id", run_id, "--quiet"])
            .output()
            .unwrap();
        assert_success(&output);
        let doc = stdout_json(&output);
        assert_eq!(doc["segments"], 12);
        assert_eq!(doc["errors"], 0);
        assert_eq!(doc["needs_review"], 0);
        assert!(
            output.stderr.is_empty(),
            "--quiet must silence progress, got: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }

    // Without --quiet the per-segment progress stream is on stderr.
    let noisy = papel()
        .args(["annotate", "--config"])
        .arg(&config_path)
        .args(["--run-id", "noisy"])
        .output()
        .unwrap();
    assert_success(&noisy);
    assert!(!noisy.stderr.is_empty());

    // Evaluate both runs; the stub reproduces the gold standard exactly.
    for run_id in ["base", "again"] {
        let output = papel()
            .args(["evaluate", "--run-dir"])
            .arg(runs_dir.join(run_id))
            .args(["--emit-tables"])
            .output()
            .unwrap();
        assert_success(&output);
        let doc = stdout_json(&output);
        assert_eq!(doc["micro_f1"], 1.0);
        assert_eq!(doc["segments_scored"], 12);
        assert_eq!(doc["excluded_errors"], 0);
        assert!(runs_dir.join(run_id).join("report.json").is_file());
        assert!(runs_dir.join(run_id).join("report.csv").is_file());
        assert!(runs_dir.join(run_id).join("report.md").is_file());
    }

    // A bootstrap over policy subsets of size 2 (C(3,2) = 3, enumerated
    // exhaustively) also succeeds end to end.
    let booted = papel()
        .args(["evaluate", "--run-dir"])
        .arg(runs_dir.join("base"))
        .args(["--bootstrap", "--subset-size", "2", "--n-subsets", "100"])
        .args(["--out"])
        .arg(runs_dir.join("base").join("report_boot.json"))
        .output()
        .unwrap();
    assert_success(&booted);

    // Side-by-side comparison renders every category row plus micro.
    // `--runs` is the comma-separated alias for `--reports`.
    let compare = papel()
        .args(["report", "compare", "--runs"])
        .arg(format!(
            "{},{}",
            runs_dir.join("base").join("report.json").display(),
            runs_dir.join("again").join("report.json").display()
        ))
        .output()
        .unwrap();
    assert_success(&compare);
    let table = String::from_utf8_lossy(&compare.stdout);
    assert!(table.contains("| micro |"), "missing micro row:\n{table}");
    assert!(table.contains("base"));
    assert!(table.contains("again"));

    // The two runs of the same configuration produced byte-identical
    // predictions.
    let base = std::fs::read(runs_dir.join("base/predictions.jsonl")).unwrap();
    let again = std::fs::read(runs_dir.join("again/predictions.jsonl")).unwrap();
    assert_eq!(base, again);
}

#[test]
fn contradict_finds_and_confirms_the_planted_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("contra.json");
    write_run_config(
        &config_path,
        &fixture_path("contradictions.json"),
        "contradiction.IX",
        &dir.path().join("out"),
        stub_model(),
    );

    let output = papel()
        .args(["contradict", "--config"])
        .arg(&config_path)
        .args(["--run-id", "scan"])
        .output()
        .unwrap();
    assert_success(&output);
    let doc = stdout_json(&output);
    assert_eq!(doc["candidates"], 3);
    assert_eq!(doc["confirmed"], 2);
    assert_eq!(doc["policies"], 2);

    let csv = std::fs::read_to_string(dir.path().join("out/scan/confirmed.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "expected header + 2 confirmed rows:\n{csv}");
    assert!(lines[0].starts_with("policy_id,seg_a,seg_b,type"));
    assert!(csv.contains("c_delta"));
    assert!(csv.contains("c_epsilon"));

    // Explicit phase templates and a policy scope reproduce the same scan
    // when they match the defaults.
    let scoped = papel()
        .args(["contradict", "--config"])
        .arg(&config_path)
        .args([
            "--run-id",
            "scoped",
            "--phase1",
            "contradiction.IX",
            "--phase2",
            "contradiction.IX",
            "--policies",
            "c_delta,c_epsilon",
        ])
        .output()
        .unwrap();
    assert_success(&scoped);
    let scoped_doc = stdout_json(&scoped);
    assert_eq!(scoped_doc["candidates"], 3);
    assert_eq!(scoped_doc["confirmed"], 2);

    // A scope naming an unknown policy is a data error.
    let unknown = papel()
        .args(["contradict", "--config"])
        .arg(&config_path)
        .args(["--run-id", "bad", "--policies", "c_zeta"])
        .output()
        .unwrap();
    assert_eq!(unknown.status.code(), Some(3));
    let error = stderr_error(&unknown);
    assert_eq!(error["class"], "data");
    assert!(error["detail"].as_str().unwrap().contains("c_zeta"));
}

#[test]
fn evaluate_on_a_missing_run_is_a_data_error() {
    // `--run` is the documented short spelling of `--run-dir`.
    let output = papel()
        .args(["evaluate", "--run", "/nonexistent/run"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let error = stderr_error(&output);
    assert_eq!(error["level"], "error");
    assert_eq!(error["class"], "data");
    let detail = error["detail"].as_str().unwrap();
    assert!(detail.starts_with("RunNotFound"), "detail: {detail}");
    assert!(detail.contains("/nonexistent/run"));
}

#[test]
fn annotate_with_an_empty_replay_cache_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("replay.json");
    write_run_config(
        &config_path,
        &fixture_path("corpus.json"),
        "annotation.I",
        &dir.path().join("runs"),
        serde_json::json!({
            "backend": "replay",
            "model_name": "gpt-test",
            "cache_dir": dir.path().join("cache"),
        }),
    );

    let output = papel()
        .args(["annotate", "--config"])
        .arg(&config_path)
        .args(["--run-id", "replay", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let error = stderr_error(&output);
    assert_eq!(error["class"], "backend");

    // The failed run is still written out for inspection and resumption.
    let predictions = dir.path().join("runs/replay/predictions.jsonl");
    assert!(predictions.is_file());
    let text = std::fs::read_to_string(predictions).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.contains("cache_miss"));
}

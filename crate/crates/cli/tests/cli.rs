use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_encodebench"))
        .args(args)
        .env_remove("ENCODEBENCH_THREADS")
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout is line-delimited JSON"))
        .collect()
}

fn synth(dir: &Path, preset: &str, seed: &str) {
    let out = run(&["synth", "--preset", preset, "--seed", seed, "--output", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_manifest_and_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let out = run(&["synth", "--preset", "shuffle-demo", "--seed", "7", "--output", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["manifest.json", "responses.bbsm", "analysis.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let l = lines(&out);
    assert_eq!(l[0]["n_units"], 200);
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolved config"));
}

#[test]
fn missing_manifest_is_a_data_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"manifest": "absent.json", "split": {"scheme": "blank"}, "spaces": ["LLM"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "fit",
        "--config",
        dir.path().join("c.json").to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["synth", "--preset", "blank", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    // Writing commands need --output.
    assert_eq!(run(&["synth", "--preset", "blank"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--preset", "nope", "--output", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_thread_settings_are_usage_errors() {
    let out = Command::new(env!("CARGO_BIN_EXE_encodebench"))
        .args(["report", "--input", "."])
        .env("ENCODEBENCH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn feature_and_split_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    synth(&d, "fedorenko", "0");
    let f = dir.path().join("f");
    let out = run(&["features", "--kind", "sentence-position", "--lengths", "4,4,3", "--output", f.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(lines(&out)[0]["rows"], 11);
    let manifest = d.join("manifest.json");
    let out = run(&[
        "features", "--kind", "oasm", "--sigma", "1.8", "--manifest", manifest.to_str().unwrap(), "--output", f.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(lines(&out)[0]["dims"], 416);
    let out = run(&["split", "--manifest", manifest.to_str().unwrap(), "--scheme", "fedorenko", "--output", f.to_str().unwrap()]);
    let l = &lines(&out)[0];
    assert_eq!(l["n_outer_folds"], 13);
    assert_eq!(l["inner_folds"][0], 12);
    // Word position needs eight-word sentences.
    let out = run(&["features", "--kind", "word-position", "--lengths", "5", "--output", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn oasm_mean(summary: &Value, mode: &str) -> f64 {
    let modes = summary["modes"].as_array().unwrap();
    let m = modes.iter().find(|m| m["mode"] == mode).unwrap();
    let model = m["models"].as_array().unwrap().iter().find(|x| x["label"] == "OASM").unwrap();
    model["clipped"]["mean"].as_f64().unwrap()
}

#[test]
fn compare_shows_shuffled_contamination() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    synth(&d, "shuffle-demo", "3");
    let r = dir.path().join("r");
    let out = run(&["compare", "--config", d.join("analysis.json").to_str().unwrap(), "--output", r.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    let gap = oasm_mean(&summary, "shuffled") - oasm_mean(&summary, "contiguous");
    assert!(gap >= 0.25, "{gap}");
    assert!(lines(&out).iter().any(|l| l["kind"] == "model" && l["model"] == "OASM"));

    let t = dir.path().join("t");
    let out = run(&["report", "--input", r.to_str().unwrap(), "--output", t.to_str().unwrap()]);
    assert!(out.status.success());
    let table = fs::read_to_string(t.join("models.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn fit_and_sweep_write_only_into_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    synth(&d, "blank", "1");
    let before: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().file_name()).collect();
    let o = dir.path().join("o");
    let config = d.join("analysis.json");
    let out = run(&["fit", "--config", config.to_str().unwrap(), "--model", "LLM", "--output", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(o.join("fit_contiguous_LLM.json").is_file());
    assert!(o.join("predictions_contiguous_LLM.bbsm").is_file());
    let out = run(&["fit", "--config", config.to_str().unwrap(), "--model", "GPT", "--output", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let after: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(before, after);
}

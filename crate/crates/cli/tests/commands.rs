use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kiln(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kiln"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn demo() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/demo.json");
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Writes `doc` as `spec.json` in `dir`, with a short payload.
fn write_spec(dir: &Path, mut doc: Value) -> String {
    doc["payload"]["steps_per_task"] = 20.into();
    doc["payload"]["max_iterations"] = 2.into();
    fs::write(dir.join("spec.json"), serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    "spec.json".into()
}

#[test]
fn validate_accepts_the_demo() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), demo());
    let out = kiln(dir.path(), &["validate", &spec]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "OK\n");
}

#[test]
fn validate_lists_every_error() {
    let dir = TempDir::new().unwrap();
    let mut doc = demo();
    doc["compute"]["minimal_vms"] = 9.into();
    doc["reliability"]["max_retries"] = (-1).into();
    let spec = write_spec(dir.path(), doc);
    let out = kiln(dir.path(), &["validate", &spec]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.contains("compute.minimal_vms: minimal_vms > desired_vms"), "{text}");
    assert!(text.contains("reliability.max_retries"), "{text}");
}

#[test]
fn unreadable_and_malformed_files() {
    let dir = TempDir::new().unwrap();
    assert_eq!(kiln(dir.path(), &["validate", "absent.json"]).status.code(), Some(3));
    assert_eq!(kiln(dir.path(), &["submit", "absent.json"]).status.code(), Some(3));
    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(kiln(dir.path(), &["validate", "broken.json"]).status.code(), Some(2));
}

#[test]
fn submit_prints_stage_and_cost() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), demo());
    let out = kiln(dir.path(), &["submit", &spec]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    let fields: Vec<&str> = line.trim_end().split('\t').collect();
    assert_eq!(fields[..2], ["demo", "Complete"]);
    assert!(fields[2].parse::<f64>().is_ok());
    assert!(dir.path().join("runs/demo/report.json").is_file());
    assert!(dir.path().join("catalog/index.json").is_file());
}

#[test]
fn failed_run_exits_one() {
    let dir = TempDir::new().unwrap();
    let mut doc = demo();
    doc["faults"]["p_provision_fail"] = 1.0.into();
    let spec = write_spec(dir.path(), doc);
    let out = kiln(dir.path(), &["submit", &spec]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("runs/demo/report.json")).unwrap()).unwrap();
    assert!(report["failure"]["QuorumFailure"].is_object());
    assert_eq!(report["payload_invocations"], 0);
}

#[test]
fn uncurated_run_leaves_catalog_alone() {
    let dir = TempDir::new().unwrap();
    let mut doc = demo();
    doc["curate"] = false.into();
    let spec = write_spec(dir.path(), doc);
    assert_eq!(kiln(dir.path(), &["submit", &spec]).status.code(), Some(0));
    assert!(!dir.path().join("catalog").exists());
}

#[test]
fn seed_flag_overrides_spec() {
    let dir = TempDir::new().unwrap();
    let mut doc = demo();
    doc["curate"] = false.into();
    let spec = write_spec(dir.path(), doc);
    let a = stdout(&kiln(dir.path(), &["submit", &spec]));
    let b = stdout(&kiln(dir.path(), &["--seed", "7", "submit", &spec]));
    let c = stdout(&kiln(dir.path(), &["submit", &spec, "--seed", "7"]));
    assert_ne!(a, b);
    assert_eq!(b, c);
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("runs/demo/report.json")).unwrap()).unwrap();
    let first_seed = report["tasks"][0]["seed"].as_u64().unwrap();
    assert_eq!(first_seed, kiln_core::derive_task_seed(7, 0, 0));
}

#[test]
fn datasets_on_empty_catalog() {
    let dir = TempDir::new().unwrap();
    for args in [&["datasets", "list"][..], &["datasets", "search", "best_cost<1"][..]] {
        let out = kiln(dir.path(), args);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn bad_predicate_exits_two() {
    let dir = TempDir::new().unwrap();
    for bad in ["best_cost", "best_cost<", "<1", "best_cost~1"] {
        let out = kiln(dir.path(), &["datasets", "search", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn datasets_listing_is_sorted_and_repeatable() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), demo());
    assert_eq!(kiln(dir.path(), &["submit", &spec]).status.code(), Some(0));
    let first = stdout(&kiln(dir.path(), &["datasets", "list"]));
    assert_eq!(first, "demo/iter_0000\ndemo/iter_0001\n");
    assert_eq!(stdout(&kiln(dir.path(), &["datasets", "list"])), first);
    let all = stdout(&kiln(dir.path(), &["datasets", "search", "best_cost>0"]));
    assert_eq!(all, first);
    let exact = stdout(&kiln(dir.path(), &["datasets", "search", "iteration=1"]));
    assert_eq!(exact, "demo/iter_0001\n");
}

#[test]
fn sweep_reports_every_combination() {
    let dir = TempDir::new().unwrap();
    let mut doc = demo();
    doc["curate"] = false.into();
    doc["output_location"] = "runs/grid".into();
    doc["sweep"] = serde_json::json!({ "payload.sigma": [0.02, 0.04], "faults.p_provision_fail": [0.0, 1.0] });
    let spec = write_spec(dir.path(), doc);
    let out = kiln(dir.path(), &["sweep", &spec]);
    assert_eq!(out.status.code(), Some(1));
    let stages: Vec<String> = stdout(&out)
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(stages, ["Complete", "Failed", "Complete", "Failed"]);
    assert!(dir.path().join("runs/grid/sweep_summary.json").is_file());
}

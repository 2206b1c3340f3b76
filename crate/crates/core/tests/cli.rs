use std::path::Path;
use std::process::{Command, Output};

use drive_mcts::harness::import_trace;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drive-mcts")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

#[test]
fn validate_fixtures() {
    for name in ["ulti", "he", "sln", "intersection", "ramp"] {
        let out = cli(&["validate", &fixture(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cli(&["run", "--scenario", "nowhere"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["validate", "/nonexistent/config.toml"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture("sln")).unwrap().replace("max_steps = 30", "max_steps = 0");
    std::fs::write(&bad, text).unwrap();
    let out = cli(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_steps"));
}

#[test]
fn run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("he.ndjson");
    let out = cli(&[
        "run", "--scenario", "he", "--seed", "3", "--iterations", "100", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("he: outcome="));
    let (header, trace) = import_trace(&path).unwrap();
    assert_eq!(header.scenario, "he");
    assert_eq!(header.records, trace.records.len());
}

#[test]
fn runtime_errors_exit_2() {
    let out = cli(&[
        "run", "--scenario", "sln", "--iterations", "20", "--out", "/nonexistent/dir/trace.ndjson",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["config", "--scenario", "ulti", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let path = dir.path().join("ulti.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let run = cli(&["run", "--config", path.to_str().unwrap(), "--seed", "4", "--iterations", "50"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn batch_prints_a_table() {
    let out = cli(&["batch", "--scenario", "sln", "--iterations", "20,40", "--runs", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 4, "{text}");
    assert!(text.contains("SLN"));
}

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::fixture_path;

fn simctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simctl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("simctl-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn asil_prints_the_level() {
    let o = simctl(&["asil", "--severity", "S2", "--exposure", "E4", "--controllability", "C2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "B\n");

    let cell = ["asil", "--severity", "s3", "--exposure", "e1", "--controllability", "c3"];
    assert_eq!(stdout(&simctl(&cell)), "A\n");
    let mut relaxed = cell.to_vec();
    relaxed.push("--relax-s3e1c3");
    assert_eq!(stdout(&simctl(&relaxed)), "QM\n");
}

#[test]
fn usage_errors_exit_64() {
    let o = simctl(&["asil", "--severity", "S4", "--exposure", "E1", "--controllability", "C1"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("S4"));
    assert_eq!(simctl(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(simctl(&[]).status.code(), Some(64));
    assert_eq!(simctl(&["--help"]).status.code(), Some(0));
}

#[test]
fn asil_batch_reports_each_hazard() {
    let csv = fixture_path("hazards").with_extension("csv");
    let o = simctl(&["asil-batch", "--csv", path(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("HZ-001\tD"), "{out}");
    assert!(out.contains("HZ-002\tB"), "{out}");
    assert!(out.contains("HZ-005\tA"), "{out}");
    assert!(out.contains("histogram: QM=1 A=1 B=2 C=0 D=1"), "{out}");

    let relaxed = stdout(&simctl(&["asil-batch", "--csv", path(&csv), "--relax-s3e1c3"]));
    assert!(relaxed.contains("HZ-005\tQM"), "{relaxed}");

    let bad = scratch("bad.csv");
    std::fs::write(&bad, "id,description,severity,exposure,controllability\nH1,x,S9,E1,C1\n").unwrap();
    let o = simctl(&["asil-batch", "--csv", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn validate_reports_every_error() {
    let good = simctl(&["validate", "--scenario", path(&fixture_path("fig5_service_gateway"))]);
    assert_eq!(good.status.code(), Some(0));

    let text = std::fs::read_to_string(fixture_path("fig5_service_gateway"))
        .unwrap()
        .replace("\"node\": \"ecu3\"", "\"node\": \"ecu7\"")
        .replace("\"buses\": [\"can0\"],\n      \"functions\"", "\"buses\": [\"can5\"],\n      \"functions\"");
    let broken = scratch("broken.json");
    std::fs::write(&broken, text).unwrap();
    let o = simctl(&["validate", "--scenario", path(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("ecu7") && err.contains("can5"), "{err}");

    let missing = simctl(&["validate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn run_writes_the_trace() {
    let trace = scratch("fig5.jsonl");
    let o = simctl(&["run", "--scenario", path(&fixture_path("fig5_service_gateway")), "--trace", path(&trace)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.lines().count() > 100);

    let short = scratch("short.jsonl");
    let o = simctl(&[
        "run",
        "--scenario",
        path(&fixture_path("fig5_service_gateway")),
        "--trace",
        path(&short),
        "--ticks",
        "13",
        "--seed",
        "99",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let events = eesim::parse_jsonl(std::fs::read(&short).unwrap().as_slice()).unwrap();
    assert_eq!(events.last().unwrap().tick, 12);
}

#[test]
fn runtime_faults_exit_2() {
    let text = std::fs::read_to_string(fixture_path("fig5_service_gateway"))
        .unwrap()
        .replace("\"value\": 300", "\"value\": 70000");
    let scenario = scratch("overflow.json");
    std::fs::write(&scenario, text).unwrap();
    let trace = scratch("overflow.jsonl");
    let o = simctl(&["run", "--scenario", path(&scenario), "--trace", path(&trace)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(std::fs::read_to_string(&trace).unwrap().contains("\"kind\":\"fault\""));
}

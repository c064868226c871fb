//! End-to-end runs of the `hca` binary.

use std::process::Command;

use hca::harness::TELEMETRY_HEADER;

fn hca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hca"))
}

#[test]
fn run_writes_telemetry_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(&trace, "time_s,ax_forward,ax_vertical,ax_yaw\n0,1,0,0\n2,0,0,0\n3,0,0,0\n").unwrap();
    let out = dir.path().join("out");
    let status = hca()
        .args(["run", "--scenario", "window", "--mode", "adaptive", "--no-timing", "--trace"])
        .arg(&trace)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let csv = std::fs::read_to_string(out.join("telemetry.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), TELEMETRY_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.split(',').count() == 9));

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "window");
    assert_eq!(summary["collided"], false);
    assert!(summary["max_speed_mps"].as_f64().unwrap() > 0.5);
    let stdout: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(stdout, summary);
}

#[test]
fn export_scenario_round_trips() {
    let out = hca().args(["export-scenario", "--scenario", "door", "--seed", "1"]).output().unwrap();
    assert!(out.status.success());
    let file: hca::sim_world::ScenarioFile = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(file.name, "door");
    assert!(file.into_scenario().is_ok());
}

#[test]
fn bad_arguments_fail() {
    let unknown = hca().args(["run", "--scenario", "maze"]).output().unwrap();
    assert!(!unknown.status.success());
    let fixed = hca().args(["run", "--scenario", "window", "--mode", "fixed"]).output().unwrap();
    assert!(!fixed.status.success());
    assert!(String::from_utf8_lossy(&fixed.stderr).contains("--voxel-size"));
}

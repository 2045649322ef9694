use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydsync")).args(args).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().display().to_string()
}

#[test]
fn simulated_trajectory_round_trips_through_the_classifier() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let sim = run(&["simulate", "--out", &out, "--seed-kind", "af2", "--v-inter", "1", "--t-max", "300", "--stride", "20"]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("t,1A:n,1A:x,1A:y,1B:n")));
    assert!(csv.lines().any(|l| l == "# v_inter = 1.0"));

    let cls_dir = TempDir::new().unwrap();
    let traj = dir.path().join("trajectory.csv").display().to_string();
    let cls = run(&["cycle-classify", "--out", &out_arg(&cls_dir), "--input", &traj]);
    assert_eq!(cls.status.code(), Some(0), "{}", String::from_utf8_lossy(&cls.stderr));
    let v = json(&cls_dir.path().join("cycle.json"));
    assert_eq!(v["class"], "AF2-cycle");
    assert!(v["period"].as_f64().unwrap() > 0.0);
}

#[test]
fn weak_coupling_census_lists_the_unstable_symmetric_roots() {
    let dir = TempDir::new().unwrap();
    let o = run(&["fixed-points", "--out", &out_arg(&dir), "--v-inter", "1"]);
    assert!(o.status.success());
    let v = json(&dir.path().join("census.json"));
    let roots = v["roots"].as_array().unwrap();
    let of = |class: &str| roots.iter().filter(|r| r["class"] == class).collect::<Vec<_>>();
    assert_eq!(of("uniform").len(), 1);
    assert_eq!(of("AF").len(), 2);
    assert!(of("uniform").iter().chain(of("AF").iter()).all(|r| r["stable"] == false));
}

#[test]
fn undriven_census_has_only_the_ground_state() {
    let dir = TempDir::new().unwrap();
    let o = run(&["fixed-points", "--out", &out_arg(&dir), "--omega", "0"]);
    assert!(o.status.success());
    let v = json(&dir.path().join("census.json"));
    let roots = v["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    assert_eq!(roots[0]["stable"], true);
    assert!(roots[0]["populations"].as_array().unwrap().iter().all(|n| n.as_f64().unwrap().abs() < 1e-10));
}

#[test]
fn strong_coupling_phase_grid_is_constant() {
    let dir = TempDir::new().unwrap();
    let o = run(&["phase-diagram", "--out", &out_arg(&dir), "--grid-min", "3", "--grid-max", "5", "--grid-step", "0.5", "--skip-events"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("phase.csv")).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(&header[..2], ["v_inter", "phase"]);
    let phases: Vec<&str> = rows.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(phases, ["3"; 5]);
    assert!(!dir.path().join("events.json").exists());
}

#[test]
fn phase_diagram_writes_events_and_branches() {
    let dir = TempDir::new().unwrap();
    let o = run(&["phase-diagram", "--out", &out_arg(&dir), "--grid-min", "4", "--grid-max", "4.5", "--grid-step", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ev = json(&dir.path().join("events.json"));
    let kinds: Vec<&str> = ev["events"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["hopf", "pitchfork", "merge"]);
    let branches = fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    assert!(branches.lines().any(|l| l.starts_with("branch,v_inter,residual")));
}

#[test]
fn automatic_next_nearest_coupling_is_echoed() {
    let dir = TempDir::new().unwrap();
    let o = run(&["fixed-points", "--out", &out_arg(&dir), "--cols", "4", "--v-nnn", "auto"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "v_nnn = 0.078125"));
    assert!(echo.lines().any(|l| l == "cols = 4"));
}

#[test]
fn basin_run_reports_fractions() {
    let dir = TempDir::new().unwrap();
    let o = run(&["basins", "--out", &out_arg(&dir), "--v-inter", "5", "--n-samples", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("basins.json"));
    assert_eq!(v["fractions"]["AF-cycle"], 1.0);
    assert_eq!(v["samples"].as_array().unwrap().len(), 20);
}

#[test]
fn basin_run_rejects_a_deterministic_seed() {
    let dir = TempDir::new().unwrap();
    let o = run(&["basins", "--out", &out_arg(&dir), "--seed-kind", "af"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "omega = 2.2\ngamma = -1\n").unwrap();
    let o = run(&["fixed-points", "--out", &out_arg(&dir), "--config", &cfg.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = run(&["fixed-points", "--out", &out_arg(&dir), "--config", &cfg.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let first = TempDir::new().unwrap();
    let o = run(&["simulate", "--out", &out_arg(&first), "--rng", "9", "--v-inter", "2.5", "--t-max", "20", "--delta", "2.4"]);
    assert!(o.status.success());
    let echo = first.path().join("config.txt").display().to_string();
    let second = TempDir::new().unwrap();
    let o = run(&["simulate", "--out", &out_arg(&second), "--config", &echo]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = fs::read(first.path().join("trajectory.csv")).unwrap();
    let b = fs::read(second.path().join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

//! Output files on disk and file-based sensor layouts.

#![allow(clippy::field_reassign_with_default)]

use std::fs;

use msssn::scenario::output::{summary_for_runs, write_outputs, NOT_REACHED};
use msssn::scenario::{run_scenario, RunOptions, ScenarioConfig, System};

fn short() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.t_end = 20.0;
    cfg.sensors.count = 40;
    cfg
}

#[test]
fn single_run_files() {
    let mut cfg = short();
    cfg.localization.enabled = true;
    let r = run_scenario(&cfg, 5, System::Msssn, RunOptions { trace: true }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(dir.path(), &[(0, &r)], &summary_for_runs(5, &[&r])).unwrap();
    let mut names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["localization.csv", "metrics.csv", "summary.json", "trace.jsonl", "waypoints.csv"]
    );

    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert!(lines.next().unwrap().starts_with("replication,seed,system,generated,delivered"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("0,5,msssn,"));
    // Nobody dies at 0.5 J in 20 s, but 40 sensors over 100 x 100 m leave
    // regions disconnected from the start, so partition is at 0.
    assert!(row.ends_with(&format!("{},0", [NOT_REACHED; 3].join(","))), "{row}");

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["systems"]["msssn"]["lifetime_first_death"]["n"], 0);
    assert_eq!(summary["deployment_hashes"].as_array().unwrap().len(), 1);

    let waypoints = fs::read_to_string(dir.path().join("waypoints.csv")).unwrap();
    assert_eq!(waypoints.lines().next(), Some("time,sink_id,x,y"));
    assert!(waypoints.lines().count() > 4);
}

#[test]
fn flat_runs_skip_localization_file() {
    let mut cfg = short();
    cfg.localization.enabled = true;
    let runs: Vec<_> = (0..2)
        .map(|i| run_scenario(&cfg, i, System::Flat, RunOptions::default()).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let indexed: Vec<_> = runs.iter().enumerate().collect();
    write_outputs(dir.path(), &indexed, &summary_for_runs(0, &runs.iter().collect::<Vec<_>>())).unwrap();
    assert!(dir.path().join("waypoints-flat-1.csv").exists());
    assert!(!dir.path().join("localization-flat-0.csv").exists());
    assert!(!dir.path().join("trace-flat-0.jsonl").exists());
}

#[test]
fn layout_file_sets_positions_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layout.csv");
    let mut text = String::from("id,x,y,energy\n");
    for i in 0..30u32 {
        let energy = if i % 3 == 0 { "0.25" } else { "0.5" };
        text.push_str(&format!("{i},{},{},{energy}\n", 10.0 + (i % 6) as f64 * 15.0, 10.0 + (i / 6) as f64 * 18.0));
    }
    fs::write(&path, text).unwrap();
    let mut cfg = short();
    cfg.sensors.count = 30;
    cfg.sensors.layout = "file".into();
    cfg.sensors.layout_file = Some(path);
    let r = run_scenario(&cfg, 1, System::Msssn, RunOptions::default()).unwrap();
    for s in &r.world.sensors {
        let i = s.id.0;
        assert_eq!((s.pos.x, s.pos.y), (10.0 + (i % 6) as f64 * 15.0, 10.0 + (i / 6) as f64 * 18.0));
        let e = if i % 3 == 0 { 0.25 } else { 0.5 };
        assert!((s.initial_energy() - e).abs() < 1e-12);
    }
    // Seeds only move things drawn at random; the layout is fixed.
    let other = run_scenario(&cfg, 2, System::Flat, RunOptions::default()).unwrap();
    assert_eq!(r.log.meta.deployment_hash, other.log.meta.deployment_hash);
}

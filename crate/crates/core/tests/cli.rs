//! The `emwalk` binary: subcommands, flags, exit codes and artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emwalk")).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn invariants_on_a_small_grid_pass_with_exit_code_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = emwalk(&[
        "invariants",
        "--out-dir",
        out,
        "--threads",
        "2",
        "--override",
        "params.grid=16",
        "--override",
        "params.steps=8",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("invariants.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "check,instances,max_deviation,tolerance,passed");
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        assert!(cols[2].parse::<f64>().unwrap() <= 1e-12, "{l}");
        assert_eq!(cols[4], "true");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["params"]["grid"], 16);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(meta["version"].is_string());
}

#[test]
fn light_cone_violation_is_reported_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = emwalk(&[
        "drift-speed",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--override",
        "params.steps=600",
        "--override",
        "params.extent=1024",
    ]);
    assert!(!o.status.success());
    assert!(text(&o).contains("1203"), "{}", text(&o));
    assert!(!dir.path().join("metadata.json").exists());
}

#[test]
fn unknown_override_key_fails() {
    let o = emwalk(&["bloch", "--override", "params.stepz=10", "--print-config"]);
    assert!(!o.status.success());
    assert!(text(&o).contains("stepz"));
}

#[test]
fn config_file_and_overrides_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "experiment": "bloch", "params": { "steps": 40, "e_values": [0.5] } }"#).unwrap();
    let o = emwalk(&["bloch", "--config", cfg.to_str().unwrap(), "--override", "walk.eps_a=0.5", "--print-config"]);
    assert!(o.status.success(), "{}", text(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["params"]["steps"], 40);
    assert_eq!(v["params"]["e_values"], serde_json::json!([0.5]));
    assert_eq!(v["walk"]["eps_a"], 0.5);
    assert_eq!(v["walk"]["eps_l"], 1.0);

    let o = emwalk(&["localization", "--config", cfg.to_str().unwrap(), "--print-config"]);
    assert!(!o.status.success());
}

#[test]
fn bloch_run_writes_documented_columns_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = emwalk(&[
            "bloch",
            "--out-dir",
            d.path().to_str().unwrap(),
            "--override",
            "params.steps=90",
            "--override",
            "params.e_values=[0.32, 0.64]",
        ]);
        assert!(o.status.success(), "{}", text(&o));
    }
    assert_eq!(header(&a.path().join("bloch.csv")), "epsA_E,j,p_mean");
    for f in ["bloch.csv", "bloch_periods.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let periods = fs::read_to_string(a.path().join("bloch_periods.csv")).unwrap();
    let row: Vec<&str> = periods.lines().nth(2).unwrap().split(',').collect();
    let (t, expected): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert!((t - expected).abs() < 1.0, "{periods}");
}

#[test]
fn drift_speed_run_writes_fronts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = emwalk(&[
        "drift-speed",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--override",
        "params.steps=160",
        "--override",
        "params.e_values=[0.05]",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(header(&dir.path().join("drift_speed.csv")), "epsA_E,epsA_B,j,q_front,fitted_speed");
    assert_eq!(
        header(&dir.path().join("drift_speed_summary.csv")),
        "epsA_E,epsA_B,fitted_speed,expected_speed,relative_error"
    );
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert!(meta["invariant_checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(meta["summary"]["cells"][0]["max_continuity_residual"].as_f64().unwrap() <= 1e-13);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fastk::engine::read_trace_csv;

fn fastk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastk"))
        .args(args)
        .output()
        .expect("run fastk")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Shipped config with a short iteration budget so the test stays quick.
fn shortened(name: &str, dir: &Path, iterations: u64) -> PathBuf {
    let text = std::fs::read_to_string(shipped(name)).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["max_iterations"] = iterations.into();
    let path = dir.join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn figure_configs_write_one_csv_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    for (name, expected) in [
        ("fig3.json", vec!["adaptive_seed1.csv", "fixed_k10_seed1.csv", "fixed_k20_seed1.csv", "fixed_k30_seed1.csv", "fixed_k40_seed1.csv"]),
        ("fig4.json", vec!["adaptive_seed1.csv", "async_seed1.csv"]),
    ] {
        let cfg = shortened(name, dir.path(), 50);
        let out = dir.path().join(name.trim_end_matches(".json"));
        let res = fastk(&["simulate", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(csv_names(&out), expected);
        let stdout = String::from_utf8(res.stdout).unwrap();
        assert_eq!(stdout.lines().count(), expected.len());
        assert!(stdout.contains("final_error="));
    }
}

#[test]
fn single_iteration_gives_single_row_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.json");
    std::fs::write(
        &cfg,
        r#"{"version": 1, "dataset": {"m": 20, "d": 2, "seed": 0}, "workers": 2, "eta": 0.001,
            "max_iterations": 1, "response_time": {"kind": "exponential", "rate": 1.0},
            "modes": [{"mode": "fixed", "k": 1}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = fastk(&["simulate", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--seed", "42"]);
    assert!(res.status.success());
    let trace = out.join("fixed_k1_seed42.csv");
    assert_eq!(read_trace_csv(&trace).unwrap().len(), 1);

    let svg = dir.path().join("plot.svg");
    let res = fastk(&["plot", svg.to_str().unwrap(), trace.to_str().unwrap()]);
    assert!(res.status.success());
    let body = std::fs::read_to_string(svg).unwrap();
    assert!(body.contains("<circle"));
    assert!(body.contains("fixed_k1_seed42"));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"version\": 1,\n  \"workers\": 5,\n  \"respnse_time\": {}\n}\n").unwrap();
    let res = fastk(&["bounds", cfg.to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn schedule_for_deterministic_times_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped("example2.json"))
        .unwrap()
        .replace(r#"{"kind": "exponential", "rate": 5.0}"#, r#"{"kind": "deterministic", "value": 1.0}"#);
    let cfg = dir.path().join("det.json");
    std::fs::write(&cfg, text).unwrap();
    let res = fastk(&["schedule", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8(res.stderr).unwrap().contains("equal"));
    assert!(!dir.path().join("schedule.json").exists());
}

#[test]
fn example_bounds_emit_six_curves() {
    let dir = tempfile::tempdir().unwrap();
    let res = fastk(&["bounds", shipped("example2.json").to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,k1,k2,k3,k4,k5,adaptive");
    assert_eq!(csv.lines().count(), 2001);
    let schedule = std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert_eq!(schedule.lines().count(), 6);
}

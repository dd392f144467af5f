use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_B: &str = r#"{
  "experiment": "pointset_b",
  "sde": {
    "state": 1,
    "n_steps": 400,
    "n_trajectories": 300,
    "burn_in_time": 0.1,
    "master_seed": 11
  },
  "histogram": { "lo": -4.0, "hi": 4.0, "bins": 40 }
}"#;

fn cqrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqrt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary_without_timing(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap())
        .unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

#[test]
fn malformed_configs_exit_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = [
        "",
        "{",
        r#"{"experiment": "pointset_a", "sde": {"dt": -1}}"#,
        r#"{"experiment": "pointset_a", "acceptance": {"max_l2": 0.1}}"#,
        r#"{"experiment": "fp2d", "fp": {"model": {"kind": "complex2d", "state": 1}, "x_axis": {"type": "uniform", "min": -1, "max": 1, "points": 3}}}"#,
    ];
    for (k, text) in bad.iter().enumerate() {
        let out = tmp.path().join(format!("out{k}"));
        let cfg = write_config(tmp.path(), text);
        let r = cqrt(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists(), "{text} left artifacts");
        assert!(String::from_utf8_lossy(&r.stderr).contains("config error"));
    }
}

#[test]
fn missing_file_and_unknown_preset_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(cqrt(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cqrt(&["preset", "nope"]).status.code(), Some(2));
    assert_eq!(cqrt(&["show", "nope"]).status.code(), Some(2));
}

#[test]
fn stability_violation_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "duffing", "fp": {"model": {"kind": "duffing"},
            "x_axis": {"type": "uniform", "min": -5, "max": 5, "points": 201}, "dt": 0.01}}"#,
    );
    let out = tmp.path().join("out");
    let r = cqrt(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn failed_acceptance_exits_4_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_B.replace(
        r#""histogram""#,
        r#""acceptance": {"min_gamma": 0.999999}, "histogram""#,
    );
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let r = cqrt(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
    let summary = summary_without_timing(&out);
    assert_eq!(summary["passed"], Value::Bool(false));
    assert_eq!(summary["checks"][0]["metric"], "gamma");
    assert!(out.join("plot.csv").exists());
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_B);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let r = cqrt(&["run", &cfg, "--out", dir.to_str().unwrap(), "--threads", threads]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(summary_without_timing(&a), summary_without_timing(&b));
    for name in ["plot.csv", "histogram.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn seed_flag_overrides_config_and_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_B);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(cqrt(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(cqrt(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "99"]).status.success());
    let (sa, sb) = (summary_without_timing(&a), summary_without_timing(&b));
    assert_eq!(sa["seed"], 11);
    assert_eq!(sb["seed"], 99);
    assert_eq!(sb["config"]["sde"]["master_seed"], 99);
    assert_ne!(fs::read(a.join("plot.csv")).unwrap(), fs::read(b.join("plot.csv")).unwrap());
}

#[test]
fn summary_metrics_are_recomputable_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_B);
    let out = tmp.path().join("out");
    assert!(cqrt(&["run", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let summary = summary_without_timing(&out);
    let text = fs::read_to_string(out.join("plot.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_center,empirical,classical,born"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let [lo, hi] = [
        summary["config"]["window"][0].as_f64().unwrap(),
        summary["config"]["window"][1].as_f64().unwrap(),
    ];
    let inside: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= lo && r[0] <= hi).collect();
    let corr = |col: usize| {
        let n = inside.len() as f64;
        let (ma, mb) = (
            inside.iter().map(|r| r[1]).sum::<f64>() / n,
            inside.iter().map(|r| r[col]).sum::<f64>() / n,
        );
        let cov: f64 = inside.iter().map(|r| (r[1] - ma) * (r[col] - mb)).sum();
        let va: f64 = inside.iter().map(|r| (r[1] - ma).powi(2)).sum();
        let vb: f64 = inside.iter().map(|r| (r[col] - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    let gamma = summary["metrics"]["gamma"].as_f64().unwrap();
    let gamma_born = summary["metrics"]["gamma_born"].as_f64().unwrap();
    assert!((corr(2) - gamma).abs() < 1e-12);
    assert!((corr(3) - gamma_born).abs() < 1e-12);
    let listed: Vec<&str> = summary["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for name in listed {
        assert!(out.join(name).exists());
    }
}

#[test]
fn presets_are_listed_and_printable() {
    let r = cqrt(&["presets"]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    for name in ["pointset_a", "fp2d_n1", "duffing", "psi_magnitude"] {
        assert!(text.lines().any(|l| l.starts_with(name)));
    }
    let shown = cqrt(&["show", "fp1d"]);
    let v: Value = serde_json::from_slice(&shown.stdout).unwrap();
    assert_eq!(v["experiment"], "fp1d");
}

#[test]
fn psi_magnitude_preset_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("psi");
    let r = cqrt(&["preset", "psi_magnitude", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let text = fs::read_to_string(out.join("psi.csv")).unwrap();
    assert!(text.starts_with("x,y,magnitude_sq\n"));
    assert_eq!(text.lines().count(), 1 + 121 * 121);
}

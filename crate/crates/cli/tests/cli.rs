use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn psdl(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_psdl"))
        .args(args)
        .current_dir(dir)
        .env_remove("PSDL_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SCENARIO: &str = r#"{
  "schema_version": 1,
  "scenario": {
    "arrival_rate": 0.9,
    "joint": {"kind": "product", "service": {"kind": "exponential", "rate": 1.0}, "lead": {"kind": "exponential", "rate": 1.0}},
    "horizon": 100.0,
    "snapshot_times": [10.0, 50.0, 100.0],
    "seed": 11
  }
}"#;

#[test]
fn simulate_writes_three_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCENARIO);
    let out = tmp.path().join("run");
    let o = psdl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["departures.csv", "path.csv", "snapshots.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let deps = csv_rows(&out.join("departures.csv"));
    assert_eq!(deps[0], ["id", "arrival", "sojourn", "service_req", "lateness"]);
    let path = csv_rows(&out.join("path.csv"));
    assert_eq!(path[0], ["t", "Z", "W", "S"]);
    for row in &path[1..] {
        row[0].parse::<f64>().unwrap();
        row[1].parse::<usize>().unwrap();
    }
    let snaps = csv_rows(&out.join("snapshots.csv"));
    let indices: std::collections::BTreeSet<&str> = snaps[1..].iter().map(|r| r[0].as_str()).collect();
    assert!(indices.len() <= 3);
}

#[test]
fn simulate_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCENARIO);
    for d in ["a", "b"] {
        let o = psdl(&["simulate", "--config", &cfg, "--out", d], tmp.path());
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["departures.csv", "path.csv", "snapshots.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
    let o = psdl(&["simulate", "--config", &cfg, "--out", "c", "--seed-override", "12"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        fs::read(tmp.path().join("a/path.csv")).unwrap(),
        fs::read(tmp.path().join("c/path.csv")).unwrap()
    );
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", "{ not json");
    let o = psdl(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn zero_horizon_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SCENARIO.replace("\"horizon\": 100.0", "\"horizon\": 0.0").replace("[10.0, 50.0, 100.0]", "[]");
    let cfg = write_config(tmp.path(), "h.json", &body);
    let o = psdl(&["simulate", "--config", &cfg, "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wrong_request_kind_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SCENARIO);
    let o = psdl(&["lift", "--config", &cfg, "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unusable_service_sample_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SCENARIO.replace(
        r#""service": {"kind": "exponential", "rate": 1.0}"#,
        r#""service": {"kind": "pointmass_zero"}"#,
    );
    let cfg = write_config(tmp.path(), "z.json", &body);
    let o = psdl(&["simulate", "--config", &cfg, "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lift_total_mass_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "l.json",
        r#"{"schema_version": 1, "output_dir": "lift_out",
            "lift_request": {"joint": {"kind": "product", "service": {"kind": "exponential", "rate": 1.0}, "lead": {"kind": "pointmass_zero"}}, "z": 2.0}}"#,
    );
    let o = psdl(&["lift", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&tmp.path().join("lift_out/lift.csv"));
    assert_eq!(rows[0], ["x", "y", "mass"]);
    let corner = rows[1..]
        .iter()
        .find(|r| r[0].parse::<f64>().unwrap() == 0.0 && r[1] == "-inf")
        .expect("(0, -inf) row");
    assert!((corner[2].parse::<f64>().unwrap() - 2.0).abs() <= 1e-6);
    assert_eq!(rows.len() - 1, 51 * 102);
}

#[test]
fn time_in_queue_with_zero_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p.json",
        r#"{"schema_version": 1,
            "profile_request": {"profile": "time_in_queue", "joint": {"kind": "product", "service": {"kind": "exponential", "rate": 1.0}, "lead": {"kind": "pointmass_zero"}}, "z": 0.0}}"#,
    );
    let o = psdl(&["profiles", "--config", &cfg, "--out", "p"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&tmp.path().join("p/profile.csv"));
    assert_eq!(rows[0][0], "y");
    assert!(rows.len() > 1);
    assert!(rows[1..].iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn rbm_median_is_ln2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "r.json",
        r#"{"schema_version": 1,
            "rbm_request": {"drift": -1.0, "variance": 2.0, "horizon": 100.0, "seed": 5, "quantiles": [0.5]}}"#,
    );
    let o = psdl(&["rbm", "--config", &cfg, "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r/rbm_summary.json")).unwrap()).unwrap();
    let q = summary["stationary_quantiles"][0]["value"].as_f64().unwrap();
    assert!((q - std::f64::consts::LN_2).abs() < 1e-12);
    let path = csv_rows(&tmp.path().join("r/rbm_path.csv"));
    assert_eq!(path[0], ["t", "value"]);
    // 10⁵ steps thinned by 1000, plus the start
    assert_eq!(path.len() - 1, 101);
}

#[test]
fn sweep_threads_do_not_change_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "w.json",
        r#"{"schema_version": 1,
            "sweep": {
              "base": {"service": {"kind": "exponential", "rate": 1.0}, "deadlines": {"independent": {"kind": "pointmass_zero"}}, "alpha": 1.0, "gamma": 0.5},
              "r_values": [5.0, 10.0], "horizon": 1.0, "snapshot_times": [0.5, 1.0], "replications": 3, "seed_base": 9}}"#,
    );
    let a = psdl(&["sweep", "--config", &cfg, "--out", "a", "--threads", "1"], tmp.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = Command::new(env!("CARGO_BIN_EXE_psdl"))
        .args(["sweep", "--config", &cfg, "--out", "b"])
        .env("PSDL_THREADS", "3")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(b.status.code(), Some(0));
    for f in ["report.json", "rows.csv", "collapse_vs_r.csv", "profile_overlay.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2 * 3 * 2);
    let rows = csv_rows(&tmp.path().join("a/rows.csv"));
    assert_eq!(rows.len() - 1, 12);
}

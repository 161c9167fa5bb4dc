use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lbaft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbaft"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_scenario(dir: &TempDir, n: usize, binary: bool) -> PathBuf {
    let covariates = if binary {
        r#"{"family": "empirical", "points": [[0.0], [1.0]]}"#
    } else {
        r#"{"family": "uniformBox", "lower": [-1.0], "upper": [1.0]}"#
    };
    let theta = if binary { std::f64::consts::LN_2 } else { 1.0 };
    let text = format!(
        r#"{{"theta0": [{theta}], "errorLaw": {{"family": "logNormal", "logMean": 0.0, "logSd": 1.0}},
            "covariateLaw": {covariates}, "scheme": "backwardRecurrence", "n": {n}, "seed": 3}}"#
    );
    let path = dir.path().join(format!("scenario_{n}_{binary}.json"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(&dir, 5, false);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = lbaft(&["simulate", "--config", p(&cfg), "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "time,status,z1");
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("1")));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"theta0": [1.0]}"#).unwrap();
    let o = lbaft(&[
        "simulate",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn malformed_row_reports_line() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "time,status,z1\n1.0,1,0.5\n2.0,1,0.1\n0.5,yes,0.2\n").unwrap();
    let o = lbaft(&["fit", "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 4"), "{err}");
}

#[test]
fn fit_prints_time_ratio_near_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(&dir, 2000, true);
    let data = dir.path().join("data.csv");
    assert!(lbaft(&["simulate", "--config", p(&cfg), "--out", p(&data)])
        .status
        .success());
    let json = dir.path().join("est.json");
    let o = lbaft(&[
        "fit",
        "--data",
        p(&data),
        "--out",
        p(&json),
        "--reference-levels",
        "z0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    let row = table.lines().find(|l| l.starts_with("z1")).unwrap();
    let ratio: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(ratio > 1.7 && ratio < 2.35, "{table}");
    assert!(table
        .lines()
        .any(|l| l.starts_with("z0") && l.split_whitespace().nth(1) == Some("1")));
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(est["converged"], true);
}

#[test]
fn infeasible_fit_exits_three() {
    // the mean-zero moment has no root for a 0/1 covariate
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(&dir, 300, true);
    let data = dir.path().join("data.csv");
    assert!(lbaft(&["simulate", "--config", p(&cfg), "--out", p(&data)])
        .status
        .success());
    let o = lbaft(&["fit", "--data", p(&data), "--method", "mean-zero"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn study_csv_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let one = dir.path().join("one.csv");
    let two = dir.path().join("two.csv");
    for (threads, out) in [("1", &one), ("2", &two)] {
        let o = lbaft(&[
            "study",
            "--preset",
            "table1",
            "--replicates",
            "1",
            "--threads",
            threads,
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(&one).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&two).unwrap());
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("scenario,n,method,coordinate,bias"));
    assert_eq!(lines.count(), 45);
}

#[test]
fn diagnose_reports_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(&dir, 400, false);
    let o = lbaft(&["diagnose", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.is_object());

    let data = dir.path().join("data.csv");
    assert!(lbaft(&["simulate", "--config", p(&cfg), "--out", p(&data)])
        .status
        .success());
    let o = lbaft(&["diagnose", "--data", p(&data), "--theta", "1.0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

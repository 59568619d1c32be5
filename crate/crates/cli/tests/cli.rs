use std::path::Path;
use std::process::{Command, Output};

use fracvar::io::{load_ensemble, report_from_json};
use serde_json::Value;

fn fracvar(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracvar")).args(args).current_dir(dir).env_remove("FRACVAR_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracvar(&["constants", "--hurst", "0.5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["kappa", "c_h", "c_alpha", "d_h"] {
        assert!((v[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}");
    }
    assert_eq!(v["beta"].as_f64().unwrap(), 2.0);
    let bad = fracvar(&["constants", "--hurst", "1.5"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_env_seed_wins() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = |seed: &str, out: &str| {
        fracvar(&["--seed", seed, "simulate", "--process", "fbm-chol", "--hurst", "0.7", "--n", "64", "--paths", "3", "--out", out], d)
    };
    assert!(sim("7", "a.csv").status.success());
    assert!(sim("7", "b.csv").status.success());
    assert!(sim("8", "c.csv").status.success());
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert!(String::from_utf8(read("a.csv")).unwrap().starts_with("t,p0,p1,p2\n"));

    let o = Command::new(env!("CARGO_BIN_EXE_fracvar"))
        .args(["--seed", "8", "simulate", "--process", "fbm-chol", "--hurst", "0.7", "--n", "64", "--paths", "3", "--out", "env.csv"])
        .current_dir(d)
        .env("FRACVAR_SEED", "7")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read("env.csv"), read("a.csv"));
}

#[test]
fn out_dir_prefixes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracvar(&["--out-dir", "nested", "simulate", "--process", "bm", "--n", "16", "--out", "w.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("nested/w.csv").exists());
}

#[test]
fn transform_then_variation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(fracvar(&["simulate", "--process", "bm", "--n", "1024", "--paths", "20", "--out", "w.csv"], d).status.success());
    let o = fracvar(&["transform", "--op", "frac", "--alpha", "0.2", "--stride", "2", "--in", "w.csv", "--out", "x.csv"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let x = load_ensemble(&d.join("x.csv")).unwrap();
    assert_eq!((x.grid.n, x.len()), (512, 20));

    let o = fracvar(
        &[
            "variation",
            "--beta",
            "1.4285714285714286",
            "--interval",
            "0,1",
            "--schedule",
            "64,128,256,512",
            "--in",
            "x.csv",
            "--report",
            "v.json",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("v.json")).unwrap()).unwrap();
    let values = v["values"].as_array().unwrap();
    assert_eq!(values.len(), 4);
    assert_eq!(values[3]["n"], 512);
    assert!(values[3]["std_err"].as_f64().unwrap() > 0.0);
    assert!(v["verdict"].is_string());

    let o = fracvar(&["transform", "--op", "fundamental", "--in", "w.csv", "--out", "m.csv"], d);
    assert_eq!(o.status.code(), Some(2), "missing --hurst must be a usage error");
}

#[test]
fn hurst_estimates_fbm() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(fracvar(
        &["--seed", "3", "simulate", "--process", "fbm-chol", "--hurst", "0.7", "--n", "1024", "--paths", "50", "--out", "b.csv"],
        d
    )
    .status
    .success());
    let o = fracvar(&["hurst", "--in", "b.csv", "--regression"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["hurst"].as_f64().unwrap() - 0.7).abs() < 0.05, "{v}");
}

#[test]
fn malformed_csv_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "t,p0,p1\n0,0,0\n0.5,1,oops\n1,2,2\n").unwrap();
    let o = fracvar(&["hurst", "--in", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column 3"), "{}", stderr(&o));
    std::fs::write(dir.path().join("hdr.csv"), "time,p0\n0,0\n1,1\n").unwrap();
    let o = fracvar(&["hurst", "--in", "hdr.csv"], dir.path());
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn levytest_writes_a_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(fracvar(&["simulate", "--process", "bm", "--n", "2048", "--paths", "300", "--out", "w.csv"], d).status.success());
    std::fs::write(d.join("cfg.json"), r#"{ "holder_paths": 64 }"#).unwrap();
    let o = fracvar(&["levytest", "--hurst", "0.5", "--in", "w.csv", "--config", "cfg.json", "--report", "r.json"], d);
    let report = report_from_json(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(o.status.code(), Some(if report.passed() { 0 } else { 1 }));
    assert!(report.criteria.iter().all(|c| !c.sequence.is_empty()));
    // Brownian paths labelled 0.7 must fail
    let o = fracvar(&["levytest", "--hurst", "0.7", "--in", "w.csv", "--config", "cfg.json", "--report", "r7.json"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_names_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracvar(&["experiment", "list"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 13);
    assert!(stdout(&o).lines().any(|l| l == "thm3.1-battery"));
    let o = fracvar(&["experiment", "lemma9.9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown experiment"));
    std::fs::write(dir.path().join("typo.json"), r#"{ "pathz": 3 }"#).unwrap();
    let o = fracvar(&["experiment", "mv-qv", "--config", "typo.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.json"), r#"{ "paths": 200, "grid": 256, "schedule": [64, 128, 256] }"#).unwrap();
    let run = |out: &str| fracvar(&["--seed", "11", "--out-dir", out, "experiment", "mv-qv", "--config", "small.json"], d);
    let a = run("a");
    let b = run("b");
    assert!(matches!(a.status.code(), Some(0 | 1)), "{}", stderr(&a));
    assert_eq!(a.status.code(), b.status.code());
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("a/mv-qv.renormalized-qv.csv"), read("b/mv-qv.renormalized-qv.csv"));
    assert_eq!(read("a/mv-qv.report.json"), read("b/mv-qv.report.json"));
    let report = report_from_json(&String::from_utf8(read("a/mv-qv.report.json")).unwrap()).unwrap();
    assert_eq!(report.provenance.master_seed, 11);
    assert!(stdout(&a).lines().all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
}

#[test]
fn show_config_reflects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{ "levy": { "eps": 0.25 } }"#).unwrap();
    let o = fracvar(&["--seed", "5", "experiment", "prop3.4", "--config", "c.json", "--show-config"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["levy"]["eps"], 0.25);
    assert_eq!(v["cascade_p"], 0.48);
}

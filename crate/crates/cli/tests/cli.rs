use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpvcert"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn case() -> String {
    config("case_study.json").display().to_string()
}

#[test]
fn analyze_exit_code_follows_verdict() {
    let ok = run(&["analyze", "--system", &case(), "--condition", "polyqs_l14", "--gamma", "0.5"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let v = json(&ok);
    assert_eq!(v["status"], "feasible");
    assert!(v["margin"].as_f64().unwrap() > 0.0);

    let bad = run(&["analyze", "--system", &case(), "--condition", "polyqs_l14", "--gamma", "1.5"]);
    assert_eq!(code(&bad), 1);
    assert_eq!(json(&bad)["status"], "infeasible");
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&run(&["analyze", "--system", &case()])), 3);
    assert_eq!(code(&run(&["analyze", "--system", &case(), "--condition", "no_such"])), 3);
    assert_eq!(code(&run(&["analyze", "--system", "/nonexistent.json", "--condition", "polyqs_l14"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn gains_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gain.json");
    let out_s = out.display().to_string();
    let g = run(&["gains", "--system", &case(), "--condition", "synth_t43", "--gamma", "1.0", "--out", &out_s]);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    assert_eq!(json(&g)["recipe"], "t43");
    assert!(out.exists());

    let v = run(&[
        "verify", "--system", &case(), "--gamma", "1.0", "--cert", &out_s, "--gain", &out_s, "--samples", "200", "--horizon", "30",
    ]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
    let r = json(&v);
    assert_eq!(r["pass"], true);
    assert_eq!(r["mode"], "closed_loop");
    assert_eq!(r["sequences_run"], 200);

    // the same gain does not stabilize a wider family
    let w = run(&["verify", "--system", &case(), "--gamma", "1.6", "--cert", &out_s, "--gain", &out_s, "--samples", "50"]);
    assert_eq!(code(&w), 1);
}

#[test]
fn gains_rejects_analysis_only_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let o = run(&["gains", "--system", &case(), "--condition", "polyqs_l14", "--out", &out.display().to_string()]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
}

#[test]
fn infeasible_gain_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let o = run(&[
        "gains", "--system", &case(), "--condition", "synth_t43", "--gamma", "3.0", "--out", &out.display().to_string(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn analyze_certificate_verifies_open_loop() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json").display().to_string();
    let a = run(&["analyze", "--system", &case(), "--condition", "polyqs_l14", "--gamma", "0.6", "--cert-out", &cert]);
    assert_eq!(code(&a), 0);
    let v = run(&["verify", "--system", &case(), "--gamma", "0.6", "--cert", &cert, "--samples", "100"]);
    assert_eq!(code(&v), 0);
    assert_eq!(json(&v)["mode"], "open");
    // a certificate checked against the wrong system fails
    let w = run(&["verify", "--system", &case(), "--gamma", "0.9", "--cert", &cert, "--samples", "100"]);
    assert_eq!(code(&w), 1);
}

#[test]
fn bisect_reports_four_decimals() {
    let o = run(&["bisect", "--system", &case(), "--condition", "polyqs_l14", "--lo", "0.1", "--hi", "2", "--tol", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let g: f64 = v["gamma_star_4dp"].as_str().unwrap().parse().unwrap();
    assert!((g - 0.684).abs() < 0.01, "{g}");

    let bad = run(&["bisect", "--system", &case(), "--condition", "polyqs_l14", "--lo", "1.5", "--hi", "2"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn report_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    let text = serde_json::json!({
        "schema_version": 1,
        "systems": { "case": { "path": case() } },
        "bisections": [
            { "system": "case", "condition": "polyqs_l14", "lo": 0.1, "hi": 2.0, "tol": 0.01 }
        ],
        "counts": [[2, 4, 1, 1]]
    });
    std::fs::write(&cfg, text.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = run(&["report", "--config", &cfg.display().to_string(), "--out-dir", &out.display().to_string()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["gamma_star.csv", "gamma_star.md", "decision_vars.csv", "decision_vars.md", "timing.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("gamma_star.csv")).unwrap();
    assert!(csv.contains("polyqs_l14"), "{csv}");
    let counts = std::fs::read_to_string(out.join("decision_vars.csv")).unwrap();
    assert!(counts.lines().count() > 1);
}

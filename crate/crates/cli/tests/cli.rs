use std::io::Write;
use std::process::{Command, Output};

use tempfile::NamedTempFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailnet"))
}

fn config(json: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn constants_complete_graph() {
    let cfg = config(r#"{"agents":5,"objects":10,"edge_prob":1.0,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "constants",
        cfg.path().to_str().unwrap(),
        "--norm",
        "1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("quantity,agent,value,method\n"));
    assert!(text.contains("\nc_ind_sys,,10,exact\n"), "{text}");
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["constants", "/nonexistent/market.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_config_exits_2() {
    let cfg = config(r#"{"agents":2,"objects":2,"edge_prob":1.7,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&["constants", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dep_enumeration_over_ceiling_exits_3() {
    let cfg = config(r#"{"agents":30,"objects":1,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "constants",
        cfg.path().to_str().unwrap(),
        "--dep-method",
        "enumeration",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("enumeration ceiling exceeded"), "{err}");
}

#[test]
fn unknown_flag_is_an_error() {
    let cfg = config(r#"{"agents":2,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "constants",
        cfg.path().to_str().unwrap(),
        "--frobnicate",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unsupported_format_exits_2() {
    let cfg = config(r#"{"agents":2,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "uncovered",
        cfg.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn uncovered_closed_form() {
    let cfg = config(r#"{"agents":3,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&["uncovered", cfg.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\nconstant,,0.25\n"), "{text}");
    assert!(text.contains("\nexpected_count,,0.25\n"), "{text}");
}

#[test]
fn approx_rows_all_within_bound() {
    let cfg = config(r#"{"agents":50,"objects":10,"edge_prob":0.02,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "approx",
        cfg.path().to_str().unwrap(),
        "--norm",
        "2",
        "--agent2",
        "2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8, "{text}");
    for row in rows {
        assert!(row.ends_with(",true"), "{row}");
    }
}

#[test]
fn curves_sga_plateaus_at_one() {
    let cfg = config(r#"{"agents":3,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "curves",
        cfg.path().to_str().unwrap(),
        "--sweep",
        "kappa",
        "--measure",
        "taildep-sga",
        "--start",
        "1e-4",
        "--stop",
        "1e6",
        "--steps",
        "50",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    let value: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-12, "{last}");
}

#[test]
fn curves_ags_unit_slope_for_small_kappa() {
    let cfg = config(r#"{"agents":3,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let out = run(&[
        "curves",
        cfg.path().to_str().unwrap(),
        "--sweep",
        "kappa",
        "--measure",
        "taildep-ags",
        "--start",
        "1e-6",
        "--stop",
        "1e-4",
        "--steps",
        "10",
    ]);
    assert!(out.status.success());
    for line in stdout(&out).lines().skip(1) {
        let mut parts = line.split(',');
        let kappa: f64 = parts.next().unwrap().parse().unwrap();
        let value: f64 = parts.nth(1).unwrap().parse().unwrap();
        assert!((value - kappa).abs() < 1e-12, "{line}");
    }
}

#[test]
fn simulate_byte_identical_across_thread_counts() {
    let cfg = config(r#"{"agents":3,"objects":4,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = bin()
            .env("TAILNET_THREADS", threads)
            .args([
                "simulate",
                cfg.path().to_str().unwrap(),
                "--reps",
                "50000",
                "--seed",
                "42",
                "--gammas",
                "0.05,0.01",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "threads={threads}");
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn simulate_low_tail_flagged_and_strict_escalates() {
    let cfg = config(r#"{"agents":2,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let base = [
        "simulate",
        "--reps",
        "1000",
        "--gammas",
        "0.001",
    ];
    let out = bin()
        .args(base)
        .arg(cfg.path().to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("low_tail_count"), "{text}");
    let strict = bin()
        .args(base)
        .arg("--strict")
        .arg(cfg.path().to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn out_flag_writes_file() {
    let cfg = config(r#"{"agents":3,"objects":2,"edge_prob":0.5,"alpha":2.0,"k_coeffs":1.0}"#);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let out = run(&[
        "uncovered",
        cfg.path().to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("quantity,object,value\n"));
}

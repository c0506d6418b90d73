use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coagfrag::config::parse_config;

const MINIMAL: &str = r#"{
  "kernel": {"family": "constant", "k0": 1},
  "grid": {"x_min": 0.001, "x_max": 1000, "n_cells": 64},
  "initial": {"profile": "exponential"},
  "time": {"t_end": 0}
}"#;

fn coagfrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coagfrag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_end_time_writes_single_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.json", MINIMAL);
    let out = dir.path().join("out");
    let o = coagfrag(&["run", "--config", &cfg, "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let index = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(index.lines().count(), 2, "{index}");
    assert!(out.join("density_t0.csv").exists());
    assert!(!out.join("density_t1.csv").exists());
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    assert_eq!(moments.lines().count(), 2);
}

#[test]
fn invalid_alpha_is_rejected_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.json",
        &MINIMAL.replace(
            r#""kernel": {"family": "constant", "k0": 1}"#,
            r#""fragmentation": {"family": "powerlaw-frag", "s0": 1, "gamma": 0.5, "alpha": -1.5}"#,
        ),
    );
    let o = coagfrag(&["run", "--config", &cfg, "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("alpha must be > -1"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.json", &MINIMAL.replace("\"kernel\"", "\"kernell\""));
    let o = coagfrag(&["run", "--config", &cfg, "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("kernell"), "{}", stderr(&o));
}

const PRODUCT: &str = r#"{
  "kernel": {"family": "product-power", "k0": 1, "mu1": 1, "mu2": 1},
  "hypotheses": {"coagulation": {"k1": 1, "mu": 0.99}},
  "grid": {"x_min": 0.001, "x_max": 1000, "n_cells": 64},
  "initial": {"profile": "exponential"},
  "time": {"t_end": 1}
}"#;

#[test]
fn strict_mode_stops_on_failed_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", PRODUCT);
    let out = dir.path().join("out");
    let o = coagfrag(&["run", "--config", &cfg, "--out", path(&out), "--strict-hypotheses"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("A2"));
    // The audit is still recorded, but nothing was evolved.
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["audit"]["failed"], true);
    assert!(!out.join("moments.csv").exists());

    // Without --strict-hypotheses the run proceeds.
    let out2 = dir.path().join("out2");
    let o = coagfrag(&["run", "--config", &cfg, "--out", path(&out2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out2.join("moments.csv").exists());
}

#[test]
fn check_hypotheses_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let product = write(dir.path(), "p.json", PRODUCT);
    let o = coagfrag(&["check-hypotheses", "--config", &product]);
    assert_eq!(code(&o), 3);
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["failed"], true);

    let shear = write(dir.path(), "s.json", &MINIMAL.replace("\"constant\"", "\"shear\""));
    let audit_dir = dir.path().join("audit");
    let o = coagfrag(&["check-hypotheses", "--config", &shear, "--out", path(&audit_dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(audit_dir.join("audit.json").exists());
}

#[test]
fn report_echo_reloads_to_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = coagfrag(&["run", "--fixture", "scott-constant", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let echoed = parse_config(&report["config"].to_string(), "echo").unwrap();
    assert_eq!(echoed, coagfrag::config::fixture("scott-constant").unwrap());
    assert_eq!(report["versions"]["artifact_schema"], 1);
}

#[test]
fn moments_subcommand_reproduces_run_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = coagfrag(&["run", "--fixture", "scott-constant", "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    let o = coagfrag(&["moments", "--out", path(&out), "--orders", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let read = |name: &str| {
        let mut rdr = csv::Reader::from_path(out.join(name)).unwrap();
        let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
        let rows: Vec<Vec<f64>> = rdr
            .records()
            .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        (header, rows)
    };
    let (h0, r0) = read("moments.csv");
    let (h1, r1) = read("moments_recomputed.csv");
    assert!(h1.contains(&"M_0.5".to_owned()), "{h1:?}");
    assert_eq!(r0.len(), r1.len());
    for col in ["t", "M0", "M1", "M2"] {
        let i0 = h0.iter().position(|h| h == col).unwrap();
        let i1 = h1.iter().position(|h| h == col).unwrap();
        for (a, b) in r0.iter().zip(&r1) {
            assert!((a[i0] - b[i1]).abs() <= 1e-12 * a[i0].abs().max(1.0), "{col}: {} vs {}", a[i0], b[i1]);
        }
    }
}

#[test]
fn ladder_prints_json() {
    let o = coagfrag(&["ladder", "--mu", "0.5", "--nu", "-0.2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let seq: Vec<f64> = v["sequence"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(seq.len(), 3);
    assert!((seq[2] - 1.6).abs() < 1e-12);
    assert!((v["terminal_order"].as_f64().unwrap() - 1.75).abs() < 1e-12);
}

#[test]
fn oracles_lists_fixtures() {
    let o = coagfrag(&["oracles"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in coagfrag::config::FIXTURES {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = coagfrag(&["run", "--config", path(&dir.path().join("missing.json"))]);
    assert_eq!(code(&o), 4);

    let cfg = write(dir.path(), "min.json", MINIMAL);
    let file = write(dir.path(), "plain-file", "");
    let o = coagfrag(&["run", "--config", &cfg, "--out", &file]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn compare_writes_gronwall_and_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = coagfrag(&["compare", "--fixture", "gronwall-combined", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = fs::read_to_string(out.join("gronwall.csv")).unwrap();
    assert_eq!(g.lines().count(), 22);
    assert!(!g.contains("violated"));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let cfg = coagfrag::config::load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            cfg.scenario().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n > 0);
}

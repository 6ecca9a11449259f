use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switched-growth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn dim2_sweep_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["sweep", "--preset", "dim2", "--points", "61", "--out", out_dir(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("lambda_sweep.csv")).unwrap();
    assert!(text.starts_with("alpha,lambda,dlambda\n"));
    let r = rows(&dir.path().join("lambda_sweep.csv"));
    assert_eq!(r.len(), 61);
    for row in r {
        let a = row[0];
        assert!((row[1] - (a * (1.0 - a)).sqrt()).abs() < 1e-9);
    }
    let s = json(&dir.path().join("summary.json"));
    assert!((s["lambdaStar"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn single_point_range_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "sweep", "--preset", "pmca", "--param", "a=4", "--param", "A=4", "--out", out_dir(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&dir.path().join("lambda_sweep.csv")).len(), 1);
}

#[test]
fn pmca_sweep_rises_over_default_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["sweep", "--preset", "pmca", "--out", out_dir(dir.path())]);
    assert!(o.status.success());
    let r = rows(&dir.path().join("lambda_sweep.csv"));
    assert!(r.windows(2).all(|w| w[1][1] > w[0][1]));
    assert!(r.iter().all(|row| row[2] > 0.0));
    assert!((r.last().unwrap()[1] - 0.0431327).abs() < 1e-7);
}

#[test]
fn malformed_model_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"kind\": \"segment\", \"G\": [[0, 1], [").unwrap();
    let o = bin(&["perron", "--model", path.to_str().unwrap(), "--out", out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "Model");
    assert!(err["message"].as_str().unwrap().contains("EOF"));
}

#[test]
fn non_metzler_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.json");
    fs::write(&path, r#"{"kind": "vertices", "matrices": [[[0, -1], [1, 0]]]}"#).unwrap();
    let o = bin(&["perron", "--model", path.to_str().unwrap(), "--out", out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "NegativeOffDiagonal");
}

#[test]
fn usage_errors() {
    let o = bin(&["sweep", "--preset", "dim2", "--model", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "Usage");
    let o = bin(&["sweep", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "UnknownPreset");
    let o = bin(&["sweep", "--preset", "dim2", "--param", "tau1=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(bin(&["--help"]).status.success());
}

#[test]
fn non_convergence_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "growth", "--preset", "dim2", "--grid", "50", "--max-iter", "3", "--out", out_dir(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "NoConvergence");
}

#[test]
fn cfl_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["growth", "--preset", "dim2", "--grid", "50", "--dt", "1", "--out", out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "CFLViolation");
}

#[test]
fn limit_cycle_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["criteria", "--preset", "limit-cycle", "--omega", "0.5,2,8", "--out", out_dir(dir.path())]);
    assert!(o.status.success());
    let c = json(&dir.path().join("criteria.json"));
    assert!(c["highFreq"].as_f64().unwrap() > 0.0);
    assert!(c["identityResidual"].as_f64().unwrap() <= 1e-8);
    assert!((c["alphaStar"].as_f64().unwrap() - 0.415).abs() < 0.01);
    let map = c["floquetSecondAt"].as_object().unwrap();
    assert_eq!(map.len(), 3);
    let r = rows(&dir.path().join("omega_sweep.csv"));
    assert_eq!(r.len(), 3);
    // Slow perturbations lose, fast ones gain at rate highFreq / omega^2.
    assert!(r[0][1] < 0.0);
    let hf = c["highFreq"].as_f64().unwrap();
    assert!((r[2][1] * 64.0 - hf).abs() < 0.05 * hf);
}

#[test]
fn growth_writes_solution_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["growth", "--preset", "pmca", "--grid", "40", "--horizon", "400", "--out", out_dir(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("summary.json"));
    assert!((s["lambda"].as_f64().unwrap() - 0.04313).abs() < 2e-3);
    assert!(s["attractor"]["FixedPoint"].is_array());
    let header = json(&dir.path().join("hj_solution.json"));
    assert_eq!(header["N"], 40);
    let text = fs::read_to_string(dir.path().join("hj_solution.csv")).unwrap();
    assert!(text.starts_with("y1,y2,y3,u,feedback_vertex\n"));
    assert_eq!(text.lines().count(), 1 + 41 * 42 / 2);
    let t = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(t.starts_with("t,y1,y2,y3,logmass\n"));
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn ergodic_set_for_dim2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "ergodic-set", "--preset", "dim2", "--horizon", "200", "--dt", "0.01", "--trials", "20",
        "--check-horizon", "100", "--out", out_dir(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("ergodic_boundary.csv"));
    assert_eq!(r.len(), 2);
    let z = |a: f64| (1.0 - a).sqrt() / ((1.0 - a).sqrt() + a.sqrt());
    assert!((r[0][0] - z(0.2)).abs() < 1e-6);
    assert!((r[1][0] - z(0.8)).abs() < 1e-6);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["invariance"]["inside_pass"], 20);
    assert_eq!(s["invariance"]["attract_pass"], 20);
}

#[test]
fn preset_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lc.json");
    let o = bin(&["preset", "export", "limit-cycle", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = bin(&["preset", "export", "limit-cycle"]).stdout;
    let printed: Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(printed, json(&path));
    assert_eq!(printed["kind"], "segment");

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bin(&["perron", "--model", path.to_str().unwrap(), "--out", out_dir(a.path())]).status.success());
    assert!(bin(&["perron", "--preset", "limit-cycle", "--out", out_dir(b.path())]).status.success());
    let (sa, sb) = (json(&a.path().join("summary.json")), json(&b.path().join("summary.json")));
    assert_eq!(sa["entries"], sb["entries"]);
}

#[test]
fn artifacts_are_deterministic() {
    let runs: Vec<Vec<&str>> = vec![
        vec!["contraction", "--preset", "dim2", "--trials", "50"],
        vec!["trajectory", "--preset", "pmca", "--horizon", "20"],
        vec!["criteria", "--preset", "pmca"],
        vec!["growth", "--preset", "limit-cycle", "--grid", "16", "--horizon", "40"],
    ];
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let mut full = args.clone();
            full.extend(["--out", out_dir(d.path())]);
            let o = bin(&full);
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let x = fs::read(a.path().join(&name)).unwrap();
            let y = fs::read(b.path().join(&name)).unwrap();
            assert_eq!(x, y, "{args:?} {name:?}");
        }
    }
}

#[test]
fn trajectory_controls() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "trajectory", "--preset", "dim2", "--alpha", "0.5", "--horizon", "50", "--start", "0.9,0.1",
        "--out", out_dir(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("trajectory.csv"));
    let last = r.last().unwrap();
    assert!((last[0] - 50.0).abs() < 1e-9);
    assert!((last[1] - 0.5).abs() < 1e-6);
    let o = bin(&[
        "trajectory", "--preset", "pmca", "--cycle", "0,1", "--dwell", "2.5", "--horizon", "20",
        "--out", out_dir(dir.path()),
    ]);
    assert!(o.status.success());
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["pieces"], 8);
    let o = bin(&["trajectory", "--preset", "dim2", "--start", "0.5,0.6", "--out", out_dir(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epkit"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cfg: &Path, out: &Path, seed: u64) -> Output {
    bin()
        .args(["run", "--quiet", "--seed", &seed.to_string(), "--config"])
        .arg(cfg)
        .arg("--outdir")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p
}

fn result(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

const STANDARD: &str =
    r#""model": {"kind": "two_level", "e1": {"intercept": 0, "slope": 1}, "e2": {"intercept": 0, "slope": -1}, "gamma": [1, 0], "omega": 0.25}"#;

#[test]
fn find_ep_reports_the_closed_form_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&config("ep.json"), tmp.path(), 0);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result(tmp.path());
    assert!(r["lambda_cr"].as_f64().unwrap().abs() < 1e-10);
    assert!((r["omega_cr"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    assert!(tmp.path().join("trace.csv").exists());
    assert!(tmp.path().join("summary.txt").exists());
}

#[test]
fn diabolic_loop_gives_minus_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&config("dp_loop.json"), tmp.path(), 0);
    assert_eq!(out.status.code(), Some(0));
    let r = result(tmp.path());
    let m = r["monodromy"].as_array().unwrap();
    for (i, row) in m.iter().enumerate() {
        for (j, z) in row.as_array().unwrap().iter().enumerate() {
            let re = z[0].as_f64().unwrap();
            let im = z[1].as_f64().unwrap();
            let expect = if i == j { -1.0 } else { 0.0 };
            assert!((re - expect).abs() < 1e-6 && im.abs() < 1e-6, "M[{i}][{j}] = {re} + {im}i");
        }
    }
    let csv = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2048);
}

#[test]
fn zero_steps_is_invalid_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{{STANDARD}, "experiment": {{"kind": "loop", "path": {{"center": {{"lambda": 0, "omega": 0.25}}, "radius": 0.1, "steps": 0}}}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = run(&cfg, &out_dir, 0);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/experiment/path/steps"));
    assert!(!out_dir.exists());
}

#[test]
fn missing_config_names_the_path() {
    let out = bin().args(["run", "--config", "/nonexistent/cfg.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn unknown_experiment_lists_the_valid_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!(r#"{{{STANDARD}, "experiment": {{"kind": "levitate"}}}}"#));
    let out = run(&cfg, &tmp.path().join("out"), 0);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("levitate"));
    for name in ["sweep", "find-ep", "loop", "smatrix", "trapping"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn validate_accepts_shipped_configs() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let p = entry.unwrap().path();
        let out = bin().args(["validate", "--config"]).arg(&p).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn validate_reports_a_negative_width_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"kind": "two_level", "e1": {"intercept": 0, "slope": 1}, "e2": {"intercept": 0, "slope": -1}, "gamma": [1, -0.5], "omega": 0.25},
            "experiment": {"kind": "classify", "omega": [0.3]}}"#,
    );
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.matches("error:").count(), 1, "{err}");
    assert!(err.contains("/model/gamma/1"));
}

#[test]
fn validate_warns_about_a_loop_grazing_the_branch_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{{STANDARD}, "experiment": {{"kind": "loop", "path": {{"center": {{"lambda": 0.0995, "omega": 0.25}}, "radius": 0.1, "steps": 512,
                "known_branch_points": [{{"lambda": 0, "omega": 0.25}}]}}}}}}"#
        ),
    );
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning:"));
}

#[test]
fn loop_through_the_branch_point_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{{STANDARD}, "experiment": {{"kind": "loop", "path": {{"center": {{"lambda": 0.1, "omega": 0.25}}, "radius": 0.1, "steps": 512}}}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = run(&cfg, &out_dir, 0);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn result_json_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    run(&config("ep_loop.json"), tmp.path(), 0);
    let text = fs::read_to_string(tmp.path().join("result.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&v).unwrap();
    again.push('\n');
    assert_eq!(again, text);
}

#[test]
fn trace_numbers_parse_back_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    run(&config("sweep_overcritical.json"), tmp.path(), 0);
    let csv = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',') {
            if let Ok(v) = cell.parse::<f64>() {
                if cell.contains('e') {
                    assert_eq!(format!("{:.16e}", v + 0.0), cell);
                }
            }
        }
    }
}

#[test]
fn seed_controls_random_starts() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |d: &str, seed| {
        let dir = tmp.path().join(d);
        run(&config("ep.json"), &dir, seed);
        fs::read_to_string(dir.join("trace.csv")).unwrap()
    };
    assert_eq!(read("a", 5), read("b", 5));
    assert_ne!(read("c", 5), read("d", 6));
}

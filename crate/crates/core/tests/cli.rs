//! End-to-end runs of the `nonlocal` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nonlocal::cli::{EigenSummary, PoissonSummary};
use nonlocal::verify::VerificationReport;

const BIN: &str = env!("CARGO_BIN_EXE_nonlocal");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("problem.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const INTERVAL: &str = r#"{
    "domain": {"shape": "interval", "a": -1, "b": 1},
    "kernel": {"family": "log_laplacian", "dim": 1, "params": {}},
    "mesh": {"n": 48},
    "seed": 9
}"#;

#[test]
fn kernel_info_reports_constants_and_exit_codes() {
    let out = run(&["kernel-info", "--kernel", "log-laplacian", "--dim", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["constants"]["normalization"].as_f64(), Some(1.0));
    assert!((v["constants"]["zero_order_shift"].as_f64().unwrap() + 1.154_431_329_803_066).abs() < 1e-12);
    assert_eq!(v["symbol"].as_array().unwrap().len(), 3);

    assert_eq!(run(&["kernel-info", "--kernel", "log-laplacian"]).status.code(), Some(2));
    assert_eq!(run(&["kernel-info", "--descriptor", "[1, 2"]).status.code(), Some(2));
    // failed assumptions are reported, not fatal
    let out = run(&["kernel-info", "--kernel", "gaussian", "--dim", "1", "--width", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["assumptions"]["non_integrable"]["pass"].as_bool(), Some(false));
}

#[test]
fn eigen_writes_spectrum_modes_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), INTERVAL);
    let out_dir = dir.path().join("eig");
    let out = run(&["eigen", "--config", &cfg, "--count", "3", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let spectrum = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().next(), Some("index,eigenvalue,residual"));
    assert_eq!(spectrum.lines().count(), 4);
    let modes = fs::read_to_string(out_dir.join("modes.csv")).unwrap();
    assert_eq!(modes.lines().next(), Some("cell_id,x,u_1,u_2,u_3"));
    assert_eq!(modes.lines().count(), 49);
    let summary: EigenSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.eigenvalues.len(), 3);
    assert!(summary.min_u1_all.unwrap().0 > 0.0);
    assert!(summary.gap.unwrap().0 > 1e-6);

    let too_many = run(&["eigen", "--config", &cfg, "--count", "49", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(too_many.status.code(), Some(2));
}

#[test]
fn poisson_writes_solution_and_flags_indefinite_operators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), INTERVAL);
    let out_dir = dir.path().join("p");
    let out = run(&["poisson", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary: PoissonSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary.residual.unwrap().0 < 1e-10);
    assert!(summary.min_u.unwrap().0 > 0.0);
    let solution = fs::read_to_string(out_dir.join("solution.csv")).unwrap();
    assert_eq!(solution.lines().next(), Some("cell_id,x,u"));

    // a shift far above the first eigenvalue makes the operator indefinite
    let shifted = INTERVAL.replace("\"seed\": 9", "\"seed\": 9, \"equation\": {\"lambda\": 50}");
    let cfg = write_config(dir.path(), &shifted);
    let out = run(&["poisson", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let summary: PoissonSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, "error");
    assert!(summary.error.unwrap().smallest_eigenvalue.unwrap().0 < 0.0);
}

#[test]
fn verify_exit_code_follows_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let body = INTERVAL.replace(
        "\"seed\": 9",
        "\"seed\": 9, \"verification\": {\"checks\": [\"strong_positivity\", \"constant_nullspace\", \"kernel_assumptions\"]}",
    );
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("v");
    let out = run(&["verify", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = VerificationReport::from_json(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(report.passed);
    assert!(report.check("strong_positivity").is_some());

    let broken = write_config(dir.path(), "{\"domain\": {}}");
    assert_eq!(run(&["verify", "--config", &broken]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--config", "/nonexistent/problem.json"]).status.code(), Some(2));
}

#[test]
fn mesh_info_and_matrix_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), INTERVAL);
    let out = run(&["mesh-info", "--config", &cfg]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_interior"].as_u64(), Some(48));
    let out_dir = dir.path().join("m");
    let out = run(&["matrix", "--config", &cfg, "--format", "dense", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dense = fs::read_to_string(out_dir.join("stiffness.csv")).unwrap();
    assert_eq!(dense.lines().filter(|l| !l.is_empty()).count(), 48);
}

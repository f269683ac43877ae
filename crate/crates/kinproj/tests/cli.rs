//! End-to-end tests of the command line front end: exit codes, artifact
//! schemas and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kinproj");

fn short_scenario() -> String {
    "\
entropy.p = 1.125
entropy.c_bar = 8.0
basis.preset = 1d-k3
grid.l = 1.0
grid.n = 32
quad.panels = 16
quad.nodes_per_panel = 6
property_p.r_outer = 1.2
property_p.delta1 = 1.05
property_p.r_core = 0.5
property_p.delta2 = 0.7
initial.preset = sin-perturb
initial.base = -1, 0, 1
initial.amplitude.1 = 0.01
initial.wavenumber.1 = 1
scheme.variant = transport_projection
scheme.h = 0.01
scheme.t_final = 0.05
oracle.n_cells = 64
oracle.cfl = 0.4
study.h_list = 0.02, 0.01
study.cloud_size = 128
seed = 42
"
    .to_string()
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("failed to launch kinproj")
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.txt");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let out_dir = dir.path().join("out");
    let out = run_cli(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let state = fs::read_to_string(out_dir.join("state_final.csv")).unwrap();
    let mut lines = state.lines();
    assert_eq!(lines.next().unwrap(), "x_index,gamma_1,gamma_2,gamma_3");
    assert_eq!(lines.count(), 32);

    let ledger: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ledger.json")).unwrap()).unwrap();
    let steps = ledger["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 5);
    for step in steps {
        assert!(step["conservation_residual"].as_f64().unwrap() <= 1e-9);
        assert!(step["d_n"].as_f64().unwrap().is_finite());
    }
    assert!(ledger["initial"]["x0"].as_f64().unwrap() > 0.0);

    let moments = fs::read_to_string(out_dir.join("moments.csv")).unwrap();
    assert!(moments.starts_with("x_index,U_1,U_2,U_3"));
    assert_eq!(moments.lines().count(), 33);
}

#[test]
fn constant_state_run_has_zero_increments() {
    let dir = tempfile::tempdir().unwrap();
    let text = short_scenario()
        .replace("initial.preset = sin-perturb", "initial.preset = constant")
        .replace("initial.amplitude.1 = 0.01\n", "")
        .replace("initial.wavenumber.1 = 1\n", "");
    let scenario = write_scenario(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = run_cli(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let ledger: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ledger.json")).unwrap()).unwrap();
    let d0 = ledger["initial"]["d0"].as_f64().unwrap();
    for step in ledger["steps"].as_array().unwrap() {
        assert!((step["d_n"].as_f64().unwrap() - d0).abs() <= 1e-15);
    }
}

#[test]
fn out_of_range_exponent_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = short_scenario().replace("entropy.p = 1.125", "entropy.p = 1.5");
    let scenario = write_scenario(dir.path(), &text);
    let out = run_cli(&["run", "--scenario", &scenario, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("entropy exponent"));
}

#[test]
fn guard_violation_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // A core depth no state can reach: guard rejects the initial state.
    let text = short_scenario().replace("property_p.delta2 = 0.7", "property_p.delta2 = 3.0");
    let scenario = write_scenario(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = run_cli(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let abort: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("abort.json")).unwrap()).unwrap();
    assert_eq!(abort["step"], 0);
    assert_eq!(abort["exit_code"], 2);
}

#[test]
fn study_writes_convergence_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let out_dir = dir.path().join("out");
    let out = run_cli(&["study", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("convergence.json")).unwrap())
            .unwrap();
    assert_eq!(report["h_values"].as_array().unwrap().len(), 2);
    assert_eq!(report["pair_distances"].as_array().unwrap().len(), 1);
    assert!(report["complete"].as_bool().unwrap());
    assert_eq!(report["oracle_errors"].as_array().unwrap().len(), 2);
}

#[test]
fn study_accepts_h_list_override_with_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "study",
        "--scenario",
        &scenario,
        "--out",
        out_dir.to_str().unwrap(),
        "--h-list",
        "0.01,0.01",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("convergence.json")).unwrap())
            .unwrap();
    let distances = report["pair_distances"].as_array().unwrap();
    assert_eq!(distances.len(), 1);
    assert!(distances[0].as_f64().unwrap() <= 1e-13);
}

#[test]
fn oracle_writes_reference_moments() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let out_dir = dir.path().join("out");
    let out = run_cli(&["oracle", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("oracle_moments.csv")).unwrap();
    assert!(csv.starts_with("x_index,U_1,U_2,U_3"));
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn oracle_rejects_cfl_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = short_scenario().replace("oracle.cfl = 0.4", "oracle.cfl = 0.8");
    let scenario = write_scenario(dir.path(), &text);
    let out = run_cli(&["oracle", "--scenario", &scenario, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle.cfl"));
}

#[test]
fn missing_scenario_file_is_an_error() {
    let out = run_cli(&["study", "--scenario", "/nonexistent/path.txt", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn repeated_studies_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run_cli(&[
            "study",
            "--scenario",
            &scenario,
            "--out",
            out_dir.to_str().unwrap(),
            "--jobs",
            "1",
            "--seed",
            "9",
        ]);
        assert!(out.status.success());
        bytes.push(fs::read(out_dir.join("convergence.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &short_scenario());
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run_cli(&[
            "run",
            "--scenario",
            &scenario,
            "--out",
            out_dir.to_str().unwrap(),
            "--jobs",
            "1",
        ]);
        assert!(out.status.success());
        let mut blob = fs::read(out_dir.join("state_final.csv")).unwrap();
        blob.extend(fs::read(out_dir.join("ledger.json")).unwrap());
        blob.extend(fs::read(out_dir.join("moments.csv")).unwrap());
        bytes.push(blob);
    }
    assert_eq!(bytes[0], bytes[1], "outputs differ between identical invocations");
}

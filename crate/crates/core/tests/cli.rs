use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use exterior_fibering::sweep::records_from_csv;

const BIN: &str = env!("CARGO_BIN_EXE_exterior-fibering");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("EXTERIOR_FIBERING_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("[grid]\nn_cells = 400\n{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn eigen_writes_profile_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = run(&["eigen", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("phi1.csv")).unwrap();
    assert!(csv.starts_with("r,phi1\n"));
    assert_eq!(csv.lines().count(), 402);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("eigen.json")).unwrap()).unwrap();
    assert!(doc["principal"]["lambda1"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["config"]["grid"]["n_cells"], 400);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let cfg = small_config(first.path(), "");
    let o = run(&["eigen", "--config", &cfg, "--p", "3", "--q", "2"], first.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let second = tempfile::tempdir().unwrap();
    let resolved = first.path().join("config.resolved.toml");
    let o = run(&["eigen", "--config", resolved.to_str().unwrap()], second.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.path().join("phi1.csv")).unwrap(),
        fs::read(second.path().join("phi1.csv")).unwrap()
    );
}

#[test]
fn invalid_configuration_exits_one_naming_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eigen", "--p", "2", "--q", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p ≠ q"), "{}", stderr(&o));

    let o = run(&["eigen", "--p", "6"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("problem.p"));

    let cfg = small_config(dir.path(), "[weight]\nalpha = 1.5\n");
    let o = run(&["eigen", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weight.alpha"));

    let cfg = small_config(dir.path(), "[sweep]\nk_egde = 3\n");
    let o = run(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("k_egde"), "{}", stderr(&o));

    let o = run(&["eigen", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_without_lambda_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = run(&["solve", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--lambda"));
}

#[test]
fn solve_below_threshold_reports_no_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = run(&["solve", "--config", &cfg, "--lambda-ratio", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("solution.csv").exists());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "solved");
    assert!(doc["x_norm"].as_f64().unwrap() > 0.0);

    let o = run(&["solve", "--config", &cfg, "--lambda-ratio", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no nontrivial solution for λ ≤ λ₁(p)"));
    assert!(!dir.path().join("solution.csv").exists());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "no_solution");
}

#[test]
fn verify_surfaces_degenerate_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[problem]\np = 1.5\nq = 2.5\ngrad_reg_eps = 0.0\n");
    let o = run(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("degenerate gradient"), "{}", stderr(&o));
}

#[test]
fn out_flag_beats_environment() {
    let flagged = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();
    let cfg = small_config(flagged.path(), "");
    let o = Command::new(BIN)
        .args(["eigen", "--config", &cfg])
        .env("EXTERIOR_FIBERING_OUT", env_dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.path().join("eigen.json").exists());

    let o = run(&["eigen", "--config", &cfg], flagged.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(flagged.path().join("eigen.json").exists());
}

#[test]
fn sweep_emits_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[sweep]\nj_far = 12\n");
    let o = run(&["sweep", "--config", &cfg, "--workers", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let records = records_from_csv(&fs::read_to_string(dir.path().join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 18);
    for svg in ["sweep_energy.svg", "sweep_q_norm.svg"] {
        let text = fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.contains("asymptote"));
    }
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["records"].as_array().unwrap().len(), 18);
    assert!(doc["verdict"]["checks"].as_array().unwrap().len() == 5);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qprecision"));
    c.env_remove("QPRECISION_THREADS");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn tur_scatter_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["tur-scatter", "--models", "20", "--seed", "3", "--out-dir", out, "--gnuplot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("tur-scatter.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("model_id,seed,d_e,lambda,sigma,sigma_star,boundary_b,"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tur-scatter.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "qprecision-report/1");
    assert_eq!(report["seed"], 3);
    assert!(dir.path().join("tur-scatter.gp").exists());
    assert_eq!(fs::read_to_string(dir.path().join("tur-scatter.errors.csv")).unwrap(), "model_id,error\n");
}

#[test]
fn csv_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let render = |threads: &str, via_env: bool| {
        let sub = dir.path().join(format!("t{threads}{via_env}"));
        let mut c = bin();
        c.args(["kur-scatter", "--models", "12", "--out-dir", sub.to_str().unwrap()]);
        if via_env {
            c.env("QPRECISION_THREADS", threads);
        } else {
            c.args(["--threads", threads]);
        }
        assert_eq!(code(&c.output().unwrap()), 0);
        fs::read(sub.join("kur-scatter.csv")).unwrap()
    };
    let one = render("1", false);
    assert_eq!(one, render("4", false));
    assert_eq!(one, render("3", true));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "mode = \"tur-scatter\"\nn_models = 5\nseed = 11\nlambda = 2.0\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["tur-scatter", "--config", cfg.to_str().unwrap(), "--lambda", "1.5", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("tur-scatter.json")).unwrap()).unwrap();
    assert_eq!(report["models"], 5);
    assert_eq!(report["seed"], 11);
    assert_eq!(report["config"]["lambda"], 1.5);

    let json = dir.path().join("run.json");
    fs::write(&json, r#"{"n_models": 4, "d_e_max": 3}"#).unwrap();
    let o = run(&["kur-scatter", "--config", json.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_models = 5\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["tur-scatter", "--config", bad.to_str().unwrap()])), 4);
    let wrong_mode = dir.path().join("mode.toml");
    fs::write(&wrong_mode, "mode = \"lambda-sweep\"\n").unwrap();
    assert_eq!(code(&run(&["tur-scatter", "--config", wrong_mode.to_str().unwrap()])), 4);
    let yaml = dir.path().join("cfg.yaml");
    fs::write(&yaml, "n_models: 3\n").unwrap();
    assert_eq!(code(&run(&["tur-scatter", "--config", yaml.to_str().unwrap()])), 4);
    assert_eq!(code(&run(&["tur-scatter", "--models", "0"])), 4);
    assert_eq!(code(&run(&["tur-scatter", "--models", "many"])), 4);
    assert_eq!(code(&run(&["single", dir.path().join("missing.json").to_str().unwrap()])), 4);
    let o = bin().args(["tur-scatter", "--models", "1"]).env("QPRECISION_THREADS", "0").output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn single_model_with_trajectory_dump() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let o = run(&[
        "single",
        data("qubit-qutrit.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--trajectories",
        traj.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dump = fs::read_to_string(traj).unwrap();
    assert!(dump.starts_with("n,nu_1,mu_1,m,p_fwd,p_bwd_same,p_fwd_reversed,phi\n"));
    // d_S² d_E² trajectories for one round
    assert_eq!(dump.lines().count(), 1 + 4 * 9);
    let csv = fs::read_to_string(dir.path().join("single.csv")).unwrap();
    assert!(csv.contains("activity_indicator"));
}

#[test]
fn markov_suite_accepts_lindblad_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "markov-suite",
        "--lindblad",
        data("driven-qubit.lindblad.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(dir.path().join("markov-suite.json")).unwrap();
    assert!(report.contains("data_processing_bound:driven-qubit.lindblad"));
}

#[test]
fn shipped_sweep_reports_its_regression() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["lambda-sweep", "--out-dir", dir.path().to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lambda-sweep.json")).unwrap()).unwrap();
    let all_pass = report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true);
    assert_eq!(code(&o), if all_pass { 0 } else { 3 });
    assert_eq!(report["extra"]["golden"], true);
    let csv = fs::read_to_string(dir.path().join("lambda-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);

    // another seed: checks become informational
    let o = run(&["lambda-sweep", "--seed", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

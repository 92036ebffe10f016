use std::fs;
use std::path::{Path, PathBuf};

use qprecision::bounds::BoundReport;
use qprecision::experiment::{self, ExperimentConfig, Mode, SingleOptions};
use qprecision::markov::{self, LindbladSpec};
use qprecision::model::{forward_kraus, stationary_state, ModelDocument};
use qprecision::trajectories::{enumerate, mc_sample, MeasurementSetup, ObservableKind};
use qprecision::Error;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn shipped_model_file_loads_and_satisfies_bounds() {
    let doc = ModelDocument::load(&data("qubit-qutrit.json")).unwrap();
    assert_eq!((doc.spec.d_s, doc.spec.d_e), (2, 3));
    let again = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
    assert_eq!(again.spec, doc.spec);

    let out = experiment::run_single(&ExperimentConfig::default(), &doc, &SingleOptions::default()).unwrap();
    assert_eq!(out.report.exit_code(), 0);
    assert_eq!(out.rows.len(), 3);
}

#[test]
fn shipped_lindblad_file_matches_bundled_spec() {
    let spec = LindbladSpec::load(&data("driven-qubit.lindblad.json")).unwrap();
    let bundled = markov::driven_qubit(1.0, 1.0);
    assert!(spec.h.max_abs_diff(&bundled.h) == 0.0);
    assert_eq!(spec.jumps.len(), 1);
    let out = experiment::run_markov_suite_with(&ExperimentConfig::default(), &[("dq".into(), spec)]).unwrap();
    assert_eq!(out.report.exit_code(), 0, "{:?}", out.report.checks);
}

#[test]
fn initial_state_switches_to_general_protocol() {
    let mut doc = ModelDocument::load(&data("qubit-qutrit.json")).unwrap();
    let text = doc.to_json().unwrap().replacen(
        "\"N\": 1",
        "\"N\": 2,\n  \"initial_state\": [[[0.8, 0.0], [0.1, 0.2]], [[0.1, -0.2], [0.2, 0.0]]]",
        1,
    );
    doc = ModelDocument::from_json(&text).unwrap();
    assert!(doc.initial_state.is_some());
    let out = experiment::run_single(&ExperimentConfig::default(), &doc, &SingleOptions::default()).unwrap();
    assert_eq!(out.report.exit_code(), 0);
    assert!(out.rows.iter().any(|r| r.boundary_b.0.abs() > 1e-8));
}

#[test]
fn config_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let toml_path = dir.join("c.toml");
    fs::write(&toml_path, "mode = \"kur-scatter\"\nn_models = 7\npure_environment = true\n").unwrap();
    let cfg = ExperimentConfig::load(&toml_path).unwrap();
    assert_eq!(cfg.mode, Some(Mode::KurScatter));
    assert_eq!(cfg.n_models, 7);
    assert!(cfg.pure_environment);

    let json_path = dir.join("c.json");
    fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&json_path).unwrap(), cfg);

    fs::write(&toml_path, "n_models = 3\nd_e_max = 12\n").unwrap();
    assert!(matches!(ExperimentConfig::load(&toml_path), Err(Error::Config(_))));
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let cfg = ExperimentConfig::default();
    let spec = experiment::sample_model(9, 3, &cfg);
    let k = forward_kraus(&spec).unwrap();
    let rho = stationary_state(&k).unwrap();
    let setup = MeasurementSetup::stationary(&rho).unwrap();
    let obs = experiment::sample_observable(9, 3, 0, spec.d_e, ObservableKind::Current).unwrap();
    let exact = enumerate(&k, &setup, 1, 1_000_000).unwrap().stats(&obs).unwrap();
    let mc = mc_sample(&k, &setup, 1, &obs, 200_000, 5).unwrap();
    assert!((mc.mean_phi - exact.mean_phi).abs() < 5.0 * mc.stderr_phi);
    assert!((mc.inactivity - exact.inactivity).abs() < 0.01);
    assert!((mc.sigma_star - exact.sigma_star).abs() < 0.05 * exact.sigma_star.max(0.01));
}

#[test]
fn scatter_rows_match_direct_evaluation() {
    let cfg = ExperimentConfig { n_models: 4, ..Default::default() };
    let out = experiment::run_tur_scatter(&cfg).unwrap();
    let seed = out.report.seed;
    for row in &out.rows {
        let spec = experiment::sample_model(seed, row.model_id, &cfg);
        let k = forward_kraus(&spec).unwrap();
        let rho = stationary_state(&k).unwrap();
        let en = enumerate(&k, &MeasurementSetup::stationary(&rho).unwrap(), 1, cfg.cap).unwrap();
        let obs = experiment::sample_observable(seed, row.model_id, 0, spec.d_e, ObservableKind::Current).unwrap();
        let stats = en.stats(&obs).unwrap();
        let report = BoundReport::evaluate(obs.name(), obs.kind(), &stats).unwrap();
        assert_eq!(row.sigma_star.0, stats.sigma_star);
        assert_eq!(row.tur_bound, report.tur_bound);
        report.check().unwrap();
    }
}

#[test]
fn outputs_written_to_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let cfg = ExperimentConfig { n_models: 3, ..Default::default() };
    let out = experiment::run_kur_scatter(&cfg).unwrap();
    experiment::write_outputs(&dir, &out, true).unwrap();
    let csv = fs::read_to_string(dir.join("kur-scatter.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), experiment::ROW_COLUMNS.join(","));
    assert_eq!(csv.lines().count(), 1 + 6);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("kur-scatter.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], experiment::REPORT_SCHEMA);
    assert_eq!(report["mode"], "kur-scatter");
    assert!(fs::read_to_string(dir.join("kur-scatter.gp")).unwrap().contains("kur-scatter.csv"));
}

use posmech_harness::config::ExperimentConfig;
use posmech_harness::suites::determinism_check;
use posmech_harness::{run_experiment, HarnessError};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::canned("free_gaussian_position").unwrap();
    c.paths.n = 3000;
    c.solver.frames = 10;
    c.paths.observe = vec![0.5, 1.0];
    c
}

#[test]
fn momentum_config_reports_ks_p() {
    let r = run_experiment(&ExperimentConfig::canned("free_gaussian_momentum").unwrap()).unwrap();
    let m = r.metrics.iter().find(|m| m.name == "ks_p").expect("ks_p metric");
    assert!(m.passed, "{}", r.render());
    assert!(m.anchor.contains("Fourier") || m.anchor.contains("psi~"));
    assert!(r.passed);
}

#[test]
fn rerun_gives_identical_metric_table() {
    let c = small();
    let (a, b) = (run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
    assert_eq!(a.metric_table(), b.metric_table());
    assert_eq!(a.manifest_hash(), b.manifest_hash());
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(run_experiment(&other).unwrap().manifest_hash(), a.manifest_hash());
}

#[test]
fn worker_count_does_not_change_output() {
    let ms = determinism_check(&small(), &[1, 3]).unwrap();
    assert!(ms.iter().all(|m| m.passed), "{ms:?}");
}

#[test]
fn unknown_preset_is_a_config_error() {
    let mut c = small();
    c.preset.as_mut().unwrap().name = "wobble".into();
    match run_experiment(&c) {
        Err(HarnessError::Config(m)) => assert!(m.starts_with("preset") && m.contains("wobble"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn observation_off_the_snapshot_grid_is_rejected() {
    let mut c = small();
    c.paths.observe = vec![0.55];
    let e = run_experiment(&c).unwrap_err().to_string();
    assert!(e.contains("paths.observe"), "{e}");
}

#[test]
fn tolerance_overrides_change_verdicts() {
    let mut c = small();
    c.tolerances.insert("ks".into(), 1e-9);
    let r = run_experiment(&c).unwrap();
    assert!(!r.passed);
    assert!(r.metrics.iter().filter(|m| m.name.starts_with("ks_")).all(|m| !m.passed && m.tolerance == 1e-9));
    c.tolerances.clear();
    c.tolerances.insert("no_such_metric".into(), 1.0);
    assert!(run_experiment(&c).unwrap_err().to_string().contains("tolerances.no_such_metric"));
}

#[test]
fn report_round_trips_through_json() {
    let d = tempfile::tempdir().unwrap();
    let mut c = small();
    c.out = Some(d.path().to_path_buf());
    let r = run_experiment(&c).unwrap();
    let back = posmech_harness::RunReport::load(&d.path().join("report.json")).unwrap();
    assert_eq!(back, r);
    for a in &r.artifacts {
        let bytes = std::fs::read(d.path().join(&a.path)).unwrap();
        assert_eq!(posmech_harness::report::sha256_hex(&bytes), a.sha256);
    }
}

#[test]
fn residual_pipeline_runs_on_a_plane() {
    let text = r#"
experiment = "plane_residuals"
pipeline = "residuals"
seed = 1
[grid]
extent = [25.6, 25.6]
points = [256, 256]
[preset]
name = "gaussian"
params = { sigma = 1.0, k0 = 0.3, ky = -0.2 }
[solver]
start = 0.05
frame_dt = 0.001
frames = 2
substeps = 10
# twice the line spacing; the quantum potential term is the least resolved
[tolerances]
hamilton_jacobi_l2 = 5e-3
"#;
    let r = run_experiment(&ExperimentConfig::from_toml(text).unwrap()).unwrap();
    assert!(r.passed, "{}", r.render());
    assert_eq!(r.metrics.len(), 3);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hnko_cli::commands::Checkpoint;
use hnko_cli::io::{read_json, read_trajectory};
use hnko_cli::ExperimentConfig;
use hnko_core::model::HnkoModel;
use hnko_core::rng::{Rng64, SeedableRng};
use hnko_core::systems::hamiltonian;

fn hnko(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnko")).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn presets_are_listed() {
    let out = hnko(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["kepler", "spring-stiff1", "spring-stiff10", "spring-stiff100", "three-body", "kdv64"] {
        assert!(text.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = hnko(&["pipeline", "--preset", "kepler", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hnko(&["simulate", "--preset", "pendulum", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_hyperplane_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // q must satisfy p - floor(p/2) - 1 <= q <= p - 2
    let out = hnko(&["pipeline", "--preset", "kepler", "--hyperplanes", "6", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("invalid config"));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = hnko(&["train", "--preset", "kepler", "--data", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "t,x0,x1\n0,1,0\n0.1,1,zz\n").unwrap();
    let out = hnko(&["baseline", "--method", "dmd", "--data", p(&data), "--steps", "3", "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "malformed_file");
    assert_eq!(err["line"], 3);
    assert_eq!(err["column"], 3);
}

#[test]
fn print_config_matches_preset() {
    let out = hnko(&["pipeline", "--preset", "spring-stiff10", "--epochs", "12", "--print-config", "--out", "/nonexistent"]);
    assert!(out.status.success());
    let printed: ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
    let mut expected = ExperimentConfig::preset("spring-stiff10").unwrap();
    expected.train.epochs = 12;
    assert_eq!(printed, expected);
}

#[test]
fn noiseless_spring_simulation_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = hnko(&["simulate", "--preset", "spring-stiff100", "--sigma2", "0", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (traj, meta) = read_trajectory(&dir.path().join("trajectory.csv")).unwrap();
    let spec = meta.unwrap().system.unwrap();
    let h0 = hamiltonian(&spec, traj.state(0)).unwrap();
    for k in 0..traj.len() {
        let h = hamiltonian(&spec, traj.state(k)).unwrap();
        assert!(((h - h0) / h0).abs() < 1e-6, "step {k}");
    }
}

#[test]
fn evaluating_truth_against_itself_gives_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(hnko(&["simulate", "--preset", "kepler", "--steps", "50", "--out", p(&sim)]).status.success());
    let traj = sim.join("trajectory.csv");
    let ev = dir.path().join("ev");
    let out = hnko(&["evaluate", "--predicted", p(&traj), "--truth", p(&traj), "--out", p(&ev)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = read_json(&ev.join("metrics.json")).unwrap();
    assert_eq!(m["mean_mse"], 0.0);
    assert_eq!(m["wasserstein2"], 0.0);
    for (_, d) in m["max_drift"].as_object().unwrap() {
        assert!(d.as_f64().unwrap() < 1e-9);
    }
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(hnko(&["simulate", "--preset", "spring-stiff1", "--steps", "30", "--out", p(&sim)]).status.success());
    let data = sim.join("trajectory.csv");
    let tr = dir.path().join("tr");
    let out = hnko(&["train", "--preset", "spring-stiff1", "--epochs", "0", "--seed", "3", "--data", p(&data), "--out", p(&tr)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = Checkpoint::load(&tr.join("checkpoint.json")).unwrap();
    let (traj, _) = read_trajectory(&data).unwrap();
    let cfg = ckpt.config.clone().unwrap();
    let scaling = hnko_core::model::max_abs_scaling(std::slice::from_ref(&traj)).unwrap();
    let mut rng = Rng64::seed_from_u64(3);
    let init = HnkoModel::init(&cfg.model, std::slice::from_ref(&traj), scaling, &mut rng).unwrap();
    assert_eq!(ckpt.model.parameters(), init.parameters());
}

#[test]
fn existing_run_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--preset", "kepler", "--steps", "5", "--out", p(dir.path())];
    assert!(hnko(&args).status.success());
    let again = hnko(&args);
    assert_eq!(again.status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(hnko(&forced).status.success());
}

#[test]
fn dmd_prediction_through_the_cli_stays_on_a_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rot.csv");
    let mut text = String::from("t,x0,x1\n");
    for k in 0..40 {
        let a = 0.2 * k as f64;
        text.push_str(&format!("{},{:e},{:e}\n", k as f64 * 0.5, a.cos(), a.sin()));
    }
    fs::write(&data, text).unwrap();
    let out_dir = dir.path().join("o");
    let out = hnko(&["baseline", "--method", "dmd", "--data", p(&data), "--steps", "20", "--preset", "spring-stiff1", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (pred, _) = read_trajectory(&out_dir.join("prediction.csv")).unwrap();
    assert_eq!(pred.len(), 21);
    assert!((pred.time(0) - 19.5).abs() < 1e-12);
    for k in 0..pred.len() {
        let a = 0.2 * (39 + k) as f64;
        let s = pred.state(k);
        assert!((s[0] - a.cos()).abs() < 1e-9 && (s[1] - a.sin()).abs() < 1e-9, "step {k}");
    }
}

#[test]
fn manifest_lists_hashed_artifacts_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(hnko(&["simulate", "--preset", "three-body", "--steps", "40", "--noisy", "--out", p(&a)]).status.success());
    let m: serde_json::Value = read_json(&a.join("manifest.json")).unwrap();
    let arts = m["artifacts"].as_object().unwrap();
    assert!(arts.contains_key("trajectory.csv"));
    assert!(arts.values().all(|h| h.as_str().unwrap().len() == 64));
    let b = dir.path().join("b");
    let out = hnko(&["replay", "--manifest", p(&a.join("manifest.json")), "--out", p(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn tampered_artifact_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(hnko(&["simulate", "--preset", "kepler", "--steps", "10", "--out", p(&a)]).status.success());
    let manifest = a.join("manifest.json");
    let mut m: serde_json::Value = read_json(&manifest).unwrap();
    m["artifacts"]["trajectory.csv"] = serde_json::Value::String("0".repeat(64));
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let out = hnko(&["replay", "--manifest", p(&manifest), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
}

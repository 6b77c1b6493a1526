//! Subcommand implementations. Each run writes into its own output
//! directory and finishes with a `manifest.json` describing the invocation
//! and hashing every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hnko_core::baselines::{dmd_fit, edmd_fit_capped, linear_predict, LinearModel};
use hnko_core::eval::{discover_invariants, evaluate, feature_variance, median, Discovery, MetricsReport, DEFAULT_EIGEN_TOL};
use hnko_core::model::{max_abs_scaling, HnkoModel, LossBreakdown};
use hnko_core::rng::{Rng64, SeedableRng};
use hnko_core::systems::{add_noise_scaled, simulate_with_step, SystemSpec, Trajectory};
use hnko_core::training::train_logged;
use hnko_core::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::io::{read_json, read_trajectory, sha256_file, write_json, write_table, write_trajectory};

pub const MANIFEST: &str = "manifest.json";
/// Wall-clock timings; never hashed.
pub const TIMING: &str = "timing.json";
pub const CHECKPOINT_FORMAT: &str = "hnko-checkpoint/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Dmd,
    Edmd,
}

/// A fully resolved subcommand call, stored in the manifest for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Simulate {
        config: ExperimentConfig,
        steps: usize,
        noisy: bool,
    },
    Train {
        config: ExperimentConfig,
        data: PathBuf,
    },
    Predict {
        checkpoint: PathBuf,
        x0: X0Source,
        steps: usize,
    },
    Baseline {
        method: BaselineMethod,
        data: PathBuf,
        order: usize,
        dictionary_cap: usize,
        steps: usize,
        system: Option<SystemSpec>,
    },
    Evaluate {
        predicted: PathBuf,
        truth: PathBuf,
        system: Option<SystemSpec>,
    },
    Discover {
        checkpoint: PathBuf,
        data: PathBuf,
        tolerance: f64,
    },
    Pipeline {
        config: ExperimentConfig,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Source {
    /// Last sample of a trajectory file.
    LastOf(PathBuf),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    /// Input file -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name (relative to the run directory) -> sha256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub system: SystemSpec,
    pub dt: f64,
    pub config: Option<ExperimentConfig>,
    pub final_loss: Option<LossBreakdown>,
    pub model: HnkoModel,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let c: Checkpoint = read_json(path)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(CliError::malformed(
                path,
                None,
                None,
                &format!("unsupported checkpoint format '{}'", c.format),
            ));
        }
        Ok(c)
    }
}

/// Scalars summarizing one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub hnko: MethodSummary,
    pub dmd: MethodSummary,
    pub edmd: Option<MethodSummary>,
    pub dmd_spectral_radius: f64,
    pub orthogonality_defect: f64,
    pub final_loss: Option<LossBreakdown>,
    pub discovery: DiscoverySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_mse: f64,
    /// Mean MSE after dividing both trajectories by the per-coordinate
    /// maximum magnitude of the truth.
    pub normalized_mean_mse: f64,
    pub wasserstein2: Option<f64>,
    /// Largest relative drift of each invariant, keyed by name.
    pub max_drift: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySummary {
    pub invariants: usize,
    pub best_temporal_variance: Option<f64>,
    pub median_feature_variance: f64,
}

/// Outcome of [`run`]: where things went and their hashes.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

struct Recorder {
    dir: PathBuf,
    artifacts: Vec<String>,
    inputs: BTreeMap<String, String>,
    timing: BTreeMap<String, f64>,
}

impl Recorder {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn input(&mut self, p: &Path) -> Result<(), CliError> {
        let h = sha256_file(p)?;
        self.inputs.insert(p.display().to_string(), h);
        Ok(())
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let r = f(self);
        self.timing.insert(stage.to_string(), t.elapsed().as_secs_f64());
        r
    }
}

/// Progress callback for long stages.
pub type Log<'a> = &'a dyn Fn(&str);

/// Executes `inv` into `out`, refusing to overwrite an existing run unless
/// `force` is set.
pub fn run(inv: &Invocation, out: &Path, force: bool, log: Log) -> Result<RunOutput, CliError> {
    let inv = absolutize(inv)?;
    if out.join(MANIFEST).exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already contains a manifest; pass --force to overwrite",
            out.display()
        )));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut rec = Recorder {
        dir: out.to_path_buf(),
        artifacts: Vec::new(),
        inputs: BTreeMap::new(),
        timing: BTreeMap::new(),
    };
    match &inv {
        Invocation::Simulate { config, steps, noisy } => simulate_cmd(&mut rec, config, *steps, *noisy)?,
        Invocation::Train { config, data } => train_cmd(&mut rec, config, data, log)?,
        Invocation::Predict { checkpoint, x0, steps } => predict_cmd(&mut rec, checkpoint, x0, *steps)?,
        Invocation::Baseline {
            method,
            data,
            order,
            dictionary_cap,
            steps,
            system,
        } => baseline_cmd(&mut rec, *method, data, *order, *dictionary_cap, *steps, system.as_ref())?,
        Invocation::Evaluate {
            predicted,
            truth,
            system,
        } => evaluate_cmd(&mut rec, predicted, truth, system.as_ref())?,
        Invocation::Discover {
            checkpoint,
            data,
            tolerance,
        } => discover_cmd(&mut rec, checkpoint, data, *tolerance)?,
        Invocation::Pipeline { config } => pipeline_cmd(&mut rec, config, log)?,
    }
    let mut artifacts = BTreeMap::new();
    for name in &rec.artifacts {
        artifacts.insert(name.clone(), sha256_file(&rec.dir.join(name))?);
    }
    let manifest = Manifest {
        tool: "hnko".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv,
        inputs: rec.inputs.clone(),
        artifacts,
    };
    write_json(&out.join(TIMING), &rec.timing)?;
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(RunOutput {
        dir: out.to_path_buf(),
        manifest,
    })
}

/// Result of re-running a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub identical: bool,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

pub fn replay(manifest_path: &Path, out: &Path, force: bool, log: Log) -> Result<ReplayReport, CliError> {
    let original: Manifest = read_json(manifest_path)?;
    for (input, hash) in &original.inputs {
        let now = sha256_file(Path::new(input))?;
        if &now != hash {
            return Err(CliError::Runtime(format!("input {input} changed since the manifest was written")));
        }
    }
    let fresh = run(&original.invocation, out, force, log)?;
    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    for (name, hash) in &original.artifacts {
        match fresh.manifest.artifacts.get(name) {
            Some(h) if h == hash => {}
            Some(_) => mismatched.push(name.clone()),
            None => missing.push(name.clone()),
        }
    }
    Ok(ReplayReport {
        identical: mismatched.is_empty() && missing.is_empty(),
        mismatched,
        missing,
    })
}

fn absolutize(inv: &Invocation) -> Result<Invocation, CliError> {
    let abs = |p: &PathBuf| -> Result<PathBuf, CliError> { fs::canonicalize(p).map_err(|e| CliError::io(p, e)) };
    let mut inv = inv.clone();
    match &mut inv {
        Invocation::Simulate { config, .. } | Invocation::Pipeline { config } => {
            config.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        }
        Invocation::Train { config, data } => {
            config.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
            *data = abs(data)?;
        }
        Invocation::Predict { checkpoint, x0, .. } => {
            *checkpoint = abs(checkpoint)?;
            if let X0Source::LastOf(p) = x0 {
                *p = abs(p)?;
            }
        }
        Invocation::Baseline { data, order, .. } => {
            if *order == 0 {
                return Err(CliError::Usage("EDMD order must be at least 1".into()));
            }
            *data = abs(data)?;
        }
        Invocation::Evaluate { predicted, truth, .. } => {
            *predicted = abs(predicted)?;
            *truth = abs(truth)?;
        }
        Invocation::Discover {
            checkpoint,
            data,
            tolerance,
        } => {
            if !(*tolerance > 0.0) {
                return Err(CliError::Usage(format!("tolerance must be positive, got {tolerance}")));
            }
            *checkpoint = abs(checkpoint)?;
            *data = abs(data)?;
        }
    }
    Ok(inv)
}

/// Clean simulation of `steps` intervals from the configured initial state.
pub fn simulate_clean(cfg: &ExperimentConfig, steps: usize) -> Result<Trajectory, CliError> {
    let x0 = cfg.initial_state()?;
    Ok(simulate_with_step(&cfg.system, &x0, cfg.dt, steps, cfg.integrator_dt())?)
}

/// Applies the configured noise to `clean`.
pub fn noisy_copy(cfg: &ExperimentConfig, clean: &Trajectory) -> Result<Trajectory, CliError> {
    let scale = if cfg.noise.relative {
        max_abs_scaling(std::slice::from_ref(clean))?
    } else {
        vec![1.0; clean.dim()]
    };
    Ok(add_noise_scaled(clean, cfg.noise.sigma2, cfg.noise.seed, &scale)?)
}

fn noise_meta(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({"kind": "simulation", "noise": cfg.noise})
}

fn simulate_cmd(rec: &mut Recorder, cfg: &ExperimentConfig, steps: usize, noisy: bool) -> Result<(), CliError> {
    let clean = rec.time("simulate", |_| simulate_clean(cfg, steps))?;
    let (traj, source) = if noisy {
        (noisy_copy(cfg, &clean)?, noise_meta(cfg))
    } else {
        (clean, json!({"kind": "simulation", "noise": null}))
    };
    let p = rec.path("trajectory.csv");
    write_trajectory(&p, &traj, Some(&cfg.system), source)?;
    rec.artifacts.push("trajectory.json".into());
    Ok(())
}

/// Trains from the configured seed; returns the checkpoint and loss history.
pub fn fit_hnko(cfg: &ExperimentConfig, data: &Trajectory, log: Log) -> Result<(Checkpoint, Vec<LossBreakdown>), CliError> {
    let scaling = if cfg.normalize {
        max_abs_scaling(std::slice::from_ref(data))?
    } else {
        vec![1.0; data.dim()]
    };
    let mut rng = Rng64::seed_from_u64(cfg.train.seed);
    let init = HnkoModel::init(&cfg.model, std::slice::from_ref(data), scaling, &mut rng)?;
    let every = cfg.train.log_every.max(1);
    let outcome = train_logged(init, std::slice::from_ref(data), &cfg.train, |epoch, l| {
        if epoch % every == 0 {
            log(&format!("epoch {epoch} loss {:.6e}", l.total));
        }
    })
    .map_err(|f| CliError::Runtime(f.to_string()))?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        system: cfg.system.clone(),
        dt: data.dt(),
        config: Some(cfg.clone()),
        final_loss: outcome.final_loss,
        model: outcome.model,
    };
    Ok((ckpt, outcome.history))
}

fn write_history(path: &Path, history: &[LossBreakdown]) -> Result<(), CliError> {
    let header: Vec<String> = ["epoch", "total", "dict", "koop", "sphere", "deg", "ind"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<f64>> = history
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e as f64, l.total, l.dict, l.koop, l.sphere, l.deg, l.ind])
        .collect();
    write_table(path, &header, &rows)
}

fn train_cmd(rec: &mut Recorder, cfg: &ExperimentConfig, data: &Path, log: Log) -> Result<(), CliError> {
    rec.input(data)?;
    let (traj, _) = read_trajectory(data)?;
    let (ckpt, history) = rec.time("train", |_| fit_hnko(cfg, &traj, log))?;
    let p = rec.path("checkpoint.json");
    write_json(&p, &ckpt)?;
    let p = rec.path("loss.csv");
    write_history(&p, &history)
}

fn resolve_x0(x0: &X0Source) -> Result<Vec<f64>, CliError> {
    match x0 {
        X0Source::Explicit(v) => Ok(v.clone()),
        X0Source::LastOf(p) => Ok(read_trajectory(p)?.0.last().to_vec()),
    }
}

/// Shifts a rollout so it starts at `t0`.
fn at_time(traj: Trajectory, t0: f64) -> Result<Trajectory, CliError> {
    Ok(Trajectory::new(traj.dt(), t0, traj.states().clone())?)
}

fn predict_cmd(rec: &mut Recorder, checkpoint: &Path, x0: &X0Source, steps: usize) -> Result<(), CliError> {
    rec.input(checkpoint)?;
    let (x0v, t0) = match x0 {
        X0Source::LastOf(p) => {
            rec.input(p)?;
            let (t, _) = read_trajectory(p)?;
            (t.last().to_vec(), t.time(t.len() - 1))
        }
        other => (resolve_x0(other)?, 0.0),
    };
    let ckpt = Checkpoint::load(checkpoint)?;
    let pred = at_time(ckpt.model.predict(&x0v, steps, ckpt.dt)?, t0)?;
    let p = rec.path("prediction.csv");
    write_trajectory(&p, &pred, Some(&ckpt.system), json!({"kind": "hnko"}))?;
    rec.artifacts.push("prediction.json".into());
    Ok(())
}

fn fit_baseline(method: BaselineMethod, data: &Trajectory, order: usize, cap: usize) -> Result<LinearModel, CliError> {
    Ok(match method {
        BaselineMethod::Dmd => dmd_fit(data)?,
        BaselineMethod::Edmd => edmd_fit_capped(data, order, cap)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn baseline_cmd(
    rec: &mut Recorder,
    method: BaselineMethod,
    data: &Path,
    order: usize,
    cap: usize,
    steps: usize,
    system: Option<&SystemSpec>,
) -> Result<(), CliError> {
    rec.input(data)?;
    let (traj, meta) = read_trajectory(data)?;
    let model = fit_baseline(method, &traj, order, cap)?;
    let pred = at_time(
        linear_predict(&model, traj.last(), steps, traj.dt())?,
        traj.time(traj.len() - 1),
    )?;
    let system = system.cloned().or_else(|| meta.and_then(|m| m.system));
    let p = rec.path("baseline.json");
    write_json(&p, &json!({"method": method, "spectral_radius": model.spectral_radius()?, "model": model}))?;
    let p = rec.path("prediction.csv");
    write_trajectory(&p, &pred, system.as_ref(), json!({"kind": method}))?;
    rec.artifacts.push("prediction.json".into());
    Ok(())
}

fn metrics_table(report: &MetricsReport, truth: &Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut header = vec!["step".to_string(), "t".to_string(), "mse".to_string()];
    for s in &report.invariant_drift {
        header.push(format!("{}_pred", s.name));
        header.push(format!("{}_truth", s.name));
        header.push(format!("{}_pred_drift", s.name));
        header.push(format!("{}_truth_drift", s.name));
    }
    let rows = (0..report.mse_per_step.len())
        .map(|k| {
            let mut row = vec![k as f64, truth.time(k), report.mse_per_step[k]];
            for s in &report.invariant_drift {
                row.extend([s.predicted[k], s.truth[k], s.predicted_drift[k], s.truth_drift[k]]);
            }
            row
        })
        .collect();
    (header, rows)
}

fn write_metrics(rec: &mut Recorder, stem: &str, report: &MetricsReport, truth: &Trajectory) -> Result<(), CliError> {
    let scalars = json!({
        "horizon": report.horizon,
        "mean_mse": report.mean_mse,
        "wasserstein2": report.wasserstein2,
        "max_drift": max_drift(report),
    });
    let p = rec.path(&format!("{stem}.json"));
    write_json(&p, &scalars)?;
    let (header, rows) = metrics_table(report, truth);
    let p = rec.path(&format!("{stem}.csv"));
    write_table(&p, &header, &rows)
}

fn max_drift(report: &MetricsReport) -> BTreeMap<String, f64> {
    report
        .invariant_drift
        .iter()
        .map(|s| (s.name.clone(), s.max_predicted_drift))
        .collect()
}

fn evaluate_cmd(rec: &mut Recorder, predicted: &Path, truth: &Path, system: Option<&SystemSpec>) -> Result<(), CliError> {
    rec.input(predicted)?;
    rec.input(truth)?;
    let (pred, _) = read_trajectory(predicted)?;
    let (tru, meta) = read_trajectory(truth)?;
    let system = system
        .cloned()
        .or_else(|| meta.and_then(|m| m.system))
        .ok_or_else(|| CliError::Usage("no system given and the truth sidecar does not name one".into()))?;
    let report = evaluate(&pred, &tru, &system)?;
    write_metrics(rec, "metrics", &report, &tru)
}

#[derive(Serialize)]
struct DiscoveryFile<'a> {
    discovery: &'a Discovery,
    feature_variance: &'a [f64],
    median_feature_variance: f64,
}

fn discover_cmd(rec: &mut Recorder, checkpoint: &Path, data: &Path, tol: f64) -> Result<(), CliError> {
    rec.input(checkpoint)?;
    rec.input(data)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let (traj, _) = read_trajectory(data)?;
    let d = discover_invariants(&ckpt.model, &traj, tol)?;
    let fv = feature_variance(&ckpt.model, &traj)?;
    let p = rec.path("invariants.json");
    write_json(
        &p,
        &DiscoveryFile {
            discovery: &d,
            feature_variance: &fv,
            median_feature_variance: median(&fv),
        },
    )
}

fn normalized_mse(pred: &Trajectory, truth: &Trajectory) -> Result<f64, CliError> {
    let s = max_abs_scaling(std::slice::from_ref(truth))?;
    let scale = |t: &Trajectory| Matrix::from_fn(t.len(), t.dim(), |i, j| t.states()[(i, j)] / s[j]);
    let (a, b) = (scale(pred), scale(truth));
    let diff = a.sub(&b)?;
    Ok(diff.sum_squares() / diff.data().len() as f64)
}

fn summarize(report: &MetricsReport, pred: &Trajectory, truth: &Trajectory) -> Result<MethodSummary, CliError> {
    Ok(MethodSummary {
        mean_mse: report.mean_mse,
        normalized_mean_mse: normalized_mse(pred, truth)?,
        wasserstein2: report.wasserstein2,
        max_drift: max_drift(report),
    })
}

/// Everything the pipeline computes, kept in memory for callers that want
/// more than the files.
pub struct PipelineResult {
    pub truth: Trajectory,
    pub train: Trajectory,
    pub future: Trajectory,
    pub checkpoint: Checkpoint,
    pub history: Vec<LossBreakdown>,
    pub hnko: Trajectory,
    pub dmd: LinearModel,
    pub dmd_prediction: Trajectory,
    pub edmd_prediction: Option<Trajectory>,
    pub discovery: Discovery,
    pub feature_variance: Vec<f64>,
    pub summary: Summary,
}

/// Simulate, add noise, train HNKO, fit baselines, predict, evaluate and
/// discover invariants, without touching the file system.
pub fn run_pipeline(cfg: &ExperimentConfig, log: Log) -> Result<PipelineResult, CliError> {
    cfg.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let n_train = cfg.train_steps;
    let truth = simulate_clean(cfg, n_train + cfg.predict_steps)?;
    let train = noisy_copy(cfg, &truth.slice(0, n_train + 1)?)?;
    let future = truth.slice(n_train, truth.len())?;
    let x0 = train.last().to_vec();
    let t0 = future.t0();
    let steps = cfg.predict_steps;

    log(&format!("{}: training on {} samples", cfg.name, train.len()));
    let (checkpoint, history) = fit_hnko(cfg, &train, log)?;
    let hnko = at_time(checkpoint.model.predict(&x0, steps, cfg.dt)?, t0)?;

    let dmd = dmd_fit(&train)?;
    let dmd_prediction = at_time(linear_predict(&dmd, &x0, steps, cfg.dt)?, t0)?;
    let edmd_prediction = match edmd_fit_capped(&train, cfg.baselines.edmd_order, cfg.baselines.dictionary_cap) {
        Ok(m) => Some(at_time(linear_predict(&m, &x0, steps, cfg.dt)?, t0)?),
        Err(hnko_core::Error::DictionaryTooLarge { size, cap }) => {
            log(&format!("skipping EDMD: dictionary size {size} exceeds cap {cap}"));
            None
        }
        Err(e) => return Err(e.into()),
    };

    let rh = evaluate(&hnko, &future, &cfg.system)?;
    let rd = evaluate(&dmd_prediction, &future, &cfg.system)?;
    let re = match &edmd_prediction {
        Some(p) => Some((evaluate(p, &future, &cfg.system)?, p)),
        None => None,
    };
    let discovery = discover_invariants(&checkpoint.model, &future, DEFAULT_EIGEN_TOL)?;
    let feature_variance = feature_variance(&checkpoint.model, &future)?;

    let summary = Summary {
        name: cfg.name.clone(),
        hnko: summarize(&rh, &hnko, &future)?,
        dmd: summarize(&rd, &dmd_prediction, &future)?,
        edmd: match &re {
            Some((r, p)) => Some(summarize(r, p, &future)?),
            None => None,
        },
        dmd_spectral_radius: dmd.spectral_radius()?,
        orthogonality_defect: checkpoint.model.koopman.materialize().orthogonality_defect(),
        final_loss: checkpoint.final_loss,
        discovery: DiscoverySummary {
            invariants: discovery.invariants.len(),
            best_temporal_variance: discovery.invariants.first().map(|i| i.temporal_variance),
            median_feature_variance: median(&feature_variance),
        },
    };
    Ok(PipelineResult {
        truth,
        train,
        future,
        checkpoint,
        history,
        hnko,
        dmd,
        dmd_prediction,
        edmd_prediction,
        discovery,
        feature_variance,
        summary,
    })
}

fn pipeline_cmd(rec: &mut Recorder, cfg: &ExperimentConfig, log: Log) -> Result<(), CliError> {
    let r = rec.time("pipeline", |_| run_pipeline(cfg, log))?;
    let sys = Some(&cfg.system);
    let p = rec.path("config.json");
    write_json(&p, cfg)?;
    let p = rec.path("truth.csv");
    write_trajectory(&p, &r.truth, sys, json!({"kind": "simulation", "noise": null}))?;
    rec.artifacts.push("truth.json".into());
    let p = rec.path("train.csv");
    write_trajectory(&p, &r.train, sys, noise_meta(cfg))?;
    rec.artifacts.push("train.json".into());
    let p = rec.path("checkpoint.json");
    write_json(&p, &r.checkpoint)?;
    let p = rec.path("loss.csv");
    write_history(&p, &r.history)?;
    for (stem, pred) in [("pred_hnko", Some(&r.hnko)), ("pred_dmd", Some(&r.dmd_prediction)), ("pred_edmd", r.edmd_prediction.as_ref())] {
        if let Some(pred) = pred {
            let p = rec.path(&format!("{stem}.csv"));
            write_trajectory(&p, pred, sys, json!({"kind": stem.trim_start_matches("pred_")}))?;
            rec.artifacts.push(format!("{stem}.json"));
        }
    }
    let p = rec.path("dmd.json");
    write_json(&p, &json!({"spectral_radius": r.summary.dmd_spectral_radius, "model": r.dmd}))?;
    for (stem, pred) in [("metrics_hnko", Some(&r.hnko)), ("metrics_dmd", Some(&r.dmd_prediction)), ("metrics_edmd", r.edmd_prediction.as_ref())] {
        if let Some(pred) = pred {
            let report = evaluate(pred, &r.future, &cfg.system)?;
            write_metrics(rec, stem, &report, &r.future)?;
        }
    }
    let p = rec.path("invariants.json");
    write_json(
        &p,
        &DiscoveryFile {
            discovery: &r.discovery,
            feature_variance: &r.feature_variance,
            median_feature_variance: median(&r.feature_variance),
        },
    )?;
    let p = rec.path("summary.json");
    write_json(&p, &r.summary)
}

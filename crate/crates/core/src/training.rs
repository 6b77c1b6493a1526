//! Full-batch Adam on the comprehensive loss.
//!
//! The optimizer only ever touches the flat parameter vector of
//! [`HnkoModel`], so the Koopman matrix is updated through its skew
//! parameters and stays orthogonal, and the radius through `rho = ln r`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{HnkoModel, LossBreakdown, LossWeights};
use crate::par;
use crate::systems::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(dim_err(
            "adam_step",
            format!(
                "{} params, {} grads, moments of length {}",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    #[default]
    FullBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub weights: LossWeights,
    /// Seeds model initialization; full-batch training itself draws no
    /// random numbers.
    pub seed: u64,
    pub log_every: usize,
    #[serde(default)]
    pub batch: BatchMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            log_every: 100,
            batch: BatchMode::FullBatch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !a.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", a.learning_rate)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidParameter("Adam needs 0 <= beta < 1 and eps > 0".into()));
        }
        if self.weights.as_array().iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: HnkoModel,
    /// Loss before each update, one entry per epoch.
    pub history: Vec<LossBreakdown>,
    /// Loss of the returned model, if any epoch ran.
    pub final_loss: Option<LossBreakdown>,
}

/// Training stopped on a non-finite loss or gradient.
#[derive(Clone, Debug)]
pub struct TrainFailure {
    pub error: Error,
    /// Parameters from before the failing evaluation.
    pub last_good: HnkoModel,
    pub history: Vec<LossBreakdown>,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed epochs)", self.error, self.history.len())
    }
}

impl std::error::Error for TrainFailure {}

/// Trains `model` on `data` with full-batch Adam.
pub fn train(model: HnkoModel, data: &[Trajectory], cfg: &TrainConfig) -> std::result::Result<TrainOutcome, TrainFailure> {
    train_logged(model, data, cfg, |_, _| {})
}

/// As [`train`], calling `log(epoch, loss)` every `cfg.log_every` epochs and
/// on the last one.
pub fn train_logged(
    model: HnkoModel,
    data: &[Trajectory],
    cfg: &TrainConfig,
    mut log: impl FnMut(usize, &LossBreakdown),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error: Error, last_good: &HnkoModel, history: &[LossBreakdown]| TrainFailure {
        error,
        last_good: last_good.clone(),
        history: history.to_vec(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &model, &[]));
    }
    if let Some(tr) = data.iter().find(|t| t.dim() != model.state_dim()) {
        let e = dim_err("train", format!("data dimension {} for model expecting {}", tr.dim(), model.state_dim()));
        return Err(fail(e, &model, &[]));
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
            final_loss: None,
        });
    }

    let mut model = model;
    let mut params = model.parameters();
    let mut state = AdamState::new(params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = match model.loss_and_gradient(data, &cfg.weights) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &model, &history)),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let e = Error::Diverged {
                epoch,
                detail: format!("non-finite loss or gradient (total = {})", loss.total),
            };
            return Err(fail(e, &model, &history));
        }
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
            log(epoch, &loss);
        }
        history.push(loss);
        adam_step(&mut params, &grad, &mut state, &cfg.adam).map_err(|e| fail(e, &model, &history))?;
        if params.iter().any(|p| !p.is_finite()) {
            let e = Error::Diverged {
                epoch,
                detail: "parameters became non-finite".into(),
            };
            return Err(fail(e, &model, &history));
        }
        if let Err(e) = model.set_parameters(&params) {
            return Err(fail(e, &model, &history));
        }
    }
    let final_loss = match model.total_loss(data, &cfg.weights) {
        Ok(l) if l.is_finite() => Some(l),
        Ok(l) => {
            let e = Error::Diverged {
                epoch: cfg.epochs,
                detail: format!("non-finite final loss (total = {})", l.total),
            };
            return Err(fail(e, &model, &history));
        }
        Err(e) => return Err(fail(e, &model, &history)),
    };
    Ok(TrainOutcome {
        model,
        history,
        final_loss,
    })
}

/// Independent runs (e.g. several seeds), in parallel when enabled.
pub fn train_many(
    jobs: Vec<(HnkoModel, TrainConfig)>,
    data: &[Trajectory],
) -> Vec<std::result::Result<TrainOutcome, TrainFailure>> {
    par::map_slice(&jobs, |(model, cfg)| train(model.clone(), data, cfg))
}

/// Median of the total loss over trailing windows of `window` epochs,
/// one value per complete window.
pub fn smoothed_history(history: &[LossBreakdown], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    history
        .chunks_exact(window)
        .map(|w| {
            let mut v: Vec<f64> = w.iter().map(|l| l.total).collect();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            if v.len() % 2 == 0 {
                0.5 * (v[mid - 1] + v[mid])
            } else {
                v[mid]
            }
        })
        .collect()
}

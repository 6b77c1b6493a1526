//! Experiment configuration and the shipped presets.

use hnko_core::model::{validate_q, KoopmanVariant, ModelConfig};
use hnko_core::systems::{kdv_soliton, SystemSpec};
use hnko_core::training::TrainConfig;
use hnko_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const PRESET_NAMES: [&str; 6] = [
    "kepler",
    "spring-stiff1",
    "spring-stiff10",
    "spring-stiff100",
    "three-body",
    "kdv64",
];

const KEPLER: &str = include_str!("../presets/kepler.json");
const SPRING_STIFF1: &str = include_str!("../presets/spring-stiff1.json");
const SPRING_STIFF10: &str = include_str!("../presets/spring-stiff10.json");
const SPRING_STIFF100: &str = include_str!("../presets/spring-stiff100.json");
const THREE_BODY: &str = include_str!("../presets/three-body.json");
const KDV64: &str = include_str!("../presets/kdv64.json");

/// Initial condition: explicit coordinates or a generated KdV soliton.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Explicit(Vec<f64>),
    Soliton { kdv_soliton: SolitonSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub speed: f64,
    pub centre: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma2: f64,
    pub seed: u64,
    /// Scale each coordinate's noise by its maximum magnitude over the clean
    /// training segment.
    #[serde(default)]
    pub relative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Hermite order of the EDMD dictionary.
    pub edmd_order: usize,
    /// Largest EDMD dictionary attempted; bigger ones are skipped.
    pub dictionary_cap: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            edmd_order: 2,
            dictionary_cap: hnko_core::baselines::DEFAULT_DICTIONARY_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    pub x0: InitialState,
    /// Sampling interval of the observations.
    pub dt: f64,
    /// Integrator step; defaults to the system's own.
    #[serde(default)]
    pub integrator_dt: Option<f64>,
    pub train_steps: usize,
    pub predict_steps: usize,
    pub noise: NoiseConfig,
    /// Divide states by their per-coordinate maximum before encoding.
    #[serde(default)]
    pub normalize: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "kepler" => KEPLER,
            "spring-stiff1" => SPRING_STIFF1,
            "spring-stiff10" => SPRING_STIFF10,
            "spring-stiff100" => SPRING_STIFF100,
            "three-body" => THREE_BODY,
            "kdv64" => KDV64,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset '{name}', expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("preset {name} is malformed: {e}")))?;
        Ok(cfg)
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        match &self.x0 {
            InitialState::Explicit(v) => Ok(v.clone()),
            InitialState::Soliton { kdv_soliton: s } => match &self.system {
                SystemSpec::Kdv {
                    grid_points,
                    domain_length,
                } => Ok(kdv_soliton(*grid_points, *domain_length, s.speed, s.centre)),
                _ => Err(Error::InvalidParameter("kdv_soliton initial state needs a kdv system".into())),
            },
        }
    }

    pub fn integrator_dt(&self) -> f64 {
        self.integrator_dt.unwrap_or_else(|| self.system.default_integrator_dt())
    }

    /// Checks every constraint the pipeline relies on before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.system.validate()?;
        let x0 = self.initial_state()?;
        if x0.len() != self.system.state_dim() {
            return bad(format!(
                "x0 has {} entries, system state dimension is {}",
                x0.len(),
                self.system.state_dim()
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if let Some(h) = self.integrator_dt {
            if !(h > 0.0) {
                return bad(format!("integrator_dt must be positive, got {h}"));
            }
        }
        if self.train_steps < 1 {
            return bad("train_steps must be at least 1".into());
        }
        if !(self.noise.sigma2 >= 0.0) || !self.noise.sigma2.is_finite() {
            return bad(format!("noise sigma2 must be finite and >= 0, got {}", self.noise.sigma2));
        }
        validate_q(self.model.latent_dim, self.model.hyperplanes)?;
        self.model.validate()?;
        self.train.validate()?;
        if self.baselines.edmd_order == 0 {
            return bad("edmd_order must be at least 1".into());
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.adam.learning_rate = v;
        }
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = o.sigma2 {
            self.noise.sigma2 = v;
        }
        if let Some(v) = o.noise_seed {
            self.noise.seed = v;
        }
        if let Some(v) = o.train_steps {
            self.train_steps = v;
        }
        if let Some(v) = o.predict_steps {
            self.predict_steps = v;
        }
        if let Some(v) = o.latent_dim {
            self.model.latent_dim = v;
        }
        if let Some(v) = o.hyperplanes {
            self.model.hyperplanes = v;
        }
        if let Some(v) = o.variant {
            self.model.variant = v;
        }
        if let Some(v) = &o.hidden {
            self.model.hidden = v.clone();
        }
    }
}

/// Command-line overrides applied on top of a preset or config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub sigma2: Option<f64>,
    pub noise_seed: Option<u64>,
    pub train_steps: Option<usize>,
    pub predict_steps: Option<usize>,
    pub latent_dim: Option<usize>,
    pub hyperplanes: Option<usize>,
    pub variant: Option<KoopmanVariant>,
    pub hidden: Option<Vec<usize>>,
}

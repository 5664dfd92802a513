//! Experiment configuration: a flat TOML table, unknown keys rejected.
//!
//! ```toml
//! model = "grid:5"            # grid:<side>[:<cost_seed>] | fixture:<name> | file:<path>
//! algorithm = "cnac"          # cac | cnac
//! total_steps = 1000000
//! snapshot_every = 1000
//! seeds = [0, 1, 2]
//! output_dir = "runs/grid5"
//! oracle = false
//! ```
//!
//! Every other key has a default; see [`ExperimentConfig`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::features::StateFeatures;
use crate::fixtures;
use crate::gridworld::{build_gridworld, GridSpec};
use crate::learner::{Algorithm, ProjectionSpec, StepSchedule};
use crate::mdp::TabularCmdp;
use crate::model_file::load_model;
use crate::policy::{ActionFeatures, FeatureMode, PolicyClass};

/// Largest state space the exact oracles are run on.
pub const MAX_ORACLE_STATES: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFeatureChoice {
    /// `tabular_reduced` for cnac, `tabular` for cac.
    Auto,
    Tabular,
    TabularReduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticFeatureChoice {
    /// The model's own state features if it has any, else `one_hot_reference`.
    Auto,
    OneHot,
    /// One-hot with the initial state's coordinate removed.
    OneHotReference,
}

fn d_total_steps() -> u64 {
    1_000_000
}
fn d_snapshot() -> u64 {
    1000
}
fn d_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn d_output() -> PathBuf {
    PathBuf::from("runs/out")
}
fn d_one() -> f64 {
    1.0
}
fn d_omega() -> f64 {
    0.4
}
fn d_sigma() -> f64 {
    0.6
}
fn d_hundred() -> f64 {
    100.0
}
fn d_refresh() -> u64 {
    1000
}
fn d_tail() -> f64 {
    0.1
}
fn d_true() -> bool {
    true
}
fn d_policy_features() -> PolicyFeatureChoice {
    PolicyFeatureChoice::Auto
}
fn d_critic_features() -> CriticFeatureChoice {
    CriticFeatureChoice::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub algorithm: Algorithm,
    #[serde(default = "d_total_steps")]
    pub total_steps: u64,
    #[serde(default = "d_snapshot")]
    pub snapshot_every: u64,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    /// Attach the exact oracles to every snapshot.
    #[serde(default)]
    pub oracle: bool,

    #[serde(default = "d_one")]
    pub c_a: f64,
    #[serde(default = "d_one")]
    pub c_b: f64,
    #[serde(default = "d_one")]
    pub c_c: f64,
    #[serde(default = "d_omega")]
    pub omega: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_one")]
    pub beta: f64,

    #[serde(default = "d_hundred")]
    pub critic_radius: f64,
    #[serde(default = "d_hundred")]
    pub multiplier_cap: f64,
    #[serde(default = "d_one")]
    pub fisher_init: f64,
    #[serde(default = "d_refresh")]
    pub fisher_refresh_every: u64,
    #[serde(default = "d_one")]
    pub temperature: f64,
    #[serde(default = "d_policy_features")]
    pub policy_features: PolicyFeatureChoice,
    #[serde(default = "d_critic_features")]
    pub critic_features: CriticFeatureChoice,

    /// Fraction of the run averaged for the reported costs.
    #[serde(default = "d_tail")]
    pub tail_fraction: f64,
    #[serde(default)]
    pub freeze_actor: bool,
    #[serde(default)]
    pub freeze_multipliers: bool,
    /// `γ_k(0)` for every constraint.
    #[serde(default)]
    pub initial_multiplier: f64,
    /// Draw `θ₀ ~ U[−1, 1)` from this seed instead of starting at zero.
    #[serde(default)]
    pub initial_policy_seed: Option<u64>,
    /// Run seeds on the rayon pool.
    #[serde(default = "d_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    /// Defaults for everything but the model and algorithm.
    pub fn new(model: impl Into<String>, algorithm: Algorithm) -> Self {
        let text = format!("model = {:?}\nalgorithm = \"{}\"\n", model.into(), algorithm.name());
        toml::from_str(&text).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule { c_a: self.c_a, c_b: self.c_b, c_c: self.c_c, omega: self.omega, sigma: self.sigma, beta: self.beta }
    }

    pub fn projection(&self) -> ProjectionSpec {
        ProjectionSpec { critic_radius: self.critic_radius, multiplier_cap: self.multiplier_cap }
    }

    /// Checks everything that does not need the model.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct".into());
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad(format!("tail_fraction {} must be in (0, 1]", self.tail_fraction));
        }
        if self.fisher_refresh_every == 0 || !(self.fisher_init > 0.0 && self.fisher_init.is_finite()) {
            return bad("fisher_init must be positive and fisher_refresh_every at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.initial_multiplier >= 0.0 && self.initial_multiplier <= self.multiplier_cap) {
            return bad("initial_multiplier must lie in [0, multiplier_cap]".into());
        }
        self.schedule().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.projection().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        ModelSource::parse(&self.model)?;
        Ok(())
    }

    /// SHA-256 of the settings that determine the output, hex-encoded.
    /// `output_dir` and `parallel` do not change results and are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallel = false;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Number of final iterations averaged for the reported costs.
    pub fn tail_window(&self) -> u64 {
        ((self.tail_fraction * self.total_steps as f64).ceil() as u64).clamp(1, self.total_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Grid { side: usize, cost_seed: u64 },
    Fixture(String),
    File(PathBuf),
}

impl ModelSource {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let err = || HarnessError::Config(format!("unrecognized model {s:?}; use grid:<side>[:<seed>], fixture:<name> or file:<path>"));
        if let Some(rest) = s.strip_prefix("grid:") {
            let mut parts = rest.split(':');
            let side = parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)?;
            let cost_seed = match parts.next() {
                Some(p) => p.parse().map_err(|_| err())?,
                None => 0,
            };
            if parts.next().is_some() || side < 2 {
                return Err(err());
            }
            Ok(ModelSource::Grid { side, cost_seed })
        } else if let Some(name) = s.strip_prefix("fixture:") {
            if fixtures::by_name(name).is_none() {
                return Err(HarnessError::Config(format!("unknown fixture {name:?}; known: {:?}", fixtures::NAMES)));
            }
            Ok(ModelSource::Fixture(name.to_string()))
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(ModelSource::File(PathBuf::from(path)))
        } else {
            Err(err())
        }
    }
}

/// A model with the features a run uses.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: Arc<TabularCmdp>,
    pub policy_class: Arc<PolicyClass>,
    pub critic_features: Arc<StateFeatures>,
    pub is_grid: bool,
}

pub fn resolve_model(cfg: &ExperimentConfig) -> Result<ResolvedModel, HarnessError> {
    let (model, own_features, is_grid) = match ModelSource::parse(&cfg.model)? {
        ModelSource::Grid { side, cost_seed } => {
            let spec = GridSpec::canonical(side, cost_seed)?;
            (build_gridworld(&spec)?, None, true)
        }
        ModelSource::Fixture(name) => {
            let fx = fixtures::by_name(&name).expect("checked in parse");
            (fx.model, Some(fx.state_features), false)
        }
        ModelSource::File(path) => {
            let (m, f) = load_model(&path)?;
            (m, f, false)
        }
    };
    let mode = match cfg.policy_features {
        PolicyFeatureChoice::Auto if cfg.algorithm == Algorithm::Cnac => FeatureMode::TabularReduced,
        PolicyFeatureChoice::Auto | PolicyFeatureChoice::Tabular => FeatureMode::Tabular,
        PolicyFeatureChoice::TabularReduced => FeatureMode::TabularReduced,
    };
    let policy_class = PolicyClass::new(ActionFeatures::from_mode(&model, mode)?, cfg.temperature)?;
    let n = model.n_states();
    let critic = match (cfg.critic_features, own_features) {
        (CriticFeatureChoice::Auto, Some(f)) => f,
        (CriticFeatureChoice::OneHot, _) => StateFeatures::one_hot(n),
        _ => StateFeatures::one_hot_reference(n, model.initial_state()),
    };
    if cfg.oracle && n > MAX_ORACLE_STATES {
        return Err(HarnessError::Config(format!("oracle needs at most {MAX_ORACLE_STATES} states, model has {n}")));
    }
    Ok(ResolvedModel {
        model: Arc::new(model),
        policy_class: Arc::new(policy_class),
        critic_features: Arc::new(critic),
        is_grid,
    })
}

//! Training configuration with per-environment presets and strict,
//! field-level validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::DistKind;
use crate::envs::EnvId;
use crate::model::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env_id: EnvId,
    pub distribution: DistKind,
    pub seed: u64,
    /// Steps collected per environment per update (T).
    pub horizon: usize,
    /// Parallel environment streams (N).
    pub n_envs: usize,
    pub base_lr: f64,
    /// Optimization epochs per update (K).
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub clip_eps: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy-bonus coefficient.
    pub c2: f64,
    pub total_timesteps: u64,
    pub architecture: Architecture,
    pub hidden: Vec<usize>,
    pub normalize_advantages: bool,
    /// Global l2 gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub clip_value_loss: bool,
    pub adam_eps: f64,
}

impl TrainConfig {
    /// Hyperparameter preset for an environment.
    ///
    /// `lander` uses the Lunar Lander column of the reference hyperparameter
    /// table, `track` the CarRacing column, and `bandit` the Lunar Lander
    /// column with a shorter horizon and budget.
    pub fn preset(env_id: EnvId) -> Self {
        let lunar = Self {
            env_id,
            distribution: DistKind::Beta,
            seed: 0,
            horizon: 2048,
            n_envs: 1,
            base_lr: 3e-4,
            ppo_epochs: 10,
            minibatch_size: 32,
            gamma: 0.99,
            lambda_gae: 0.95,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.0,
            total_timesteps: 1_000_000,
            architecture: Architecture::Separate,
            hidden: vec![64, 64, 64],
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
            clip_value_loss: false,
            adam_eps: 1e-5,
        };
        match env_id {
            EnvId::Lander => lunar,
            EnvId::Bandit => Self { horizon: 256, total_timesteps: 50_000, ..lunar },
            EnvId::Track => Self {
                horizon: 500,
                n_envs: 8,
                base_lr: 2.5e-4,
                minibatch_size: 64,
                clip_eps: 0.1,
                c2: 0.01,
                total_timesteps: 5_000_000,
                architecture: Architecture::Shared,
                ..lunar
            },
        }
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.horizon * self.n_envs) as u64
    }

    pub fn n_updates(&self) -> u64 {
        self.total_timesteps / self.steps_per_update().max(1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &'static str, msg: String| errs.push(FieldError { field, message: msg });
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            bad("clip_eps", format!("must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bad("gamma", format!("must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            bad("lambda_gae", format!("must lie in [0, 1], got {}", self.lambda_gae));
        }
        for (field, v) in [
            ("horizon", self.horizon),
            ("n_envs", self.n_envs),
            ("ppo_epochs", self.ppo_epochs),
            ("minibatch_size", self.minibatch_size),
        ] {
            if v == 0 {
                bad(field, "must be at least 1".into());
            }
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            bad("base_lr", format!("must be positive, got {}", self.base_lr));
        }
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            bad("c1", format!("must be non-negative, got {}", self.c1));
        }
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            bad("c2", format!("must be non-negative, got {}", self.c2));
        }
        if !(self.adam_eps > 0.0) {
            bad("adam_eps", format!("must be positive, got {}", self.adam_eps));
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                bad("max_grad_norm", format!("must be positive or null, got {n}"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bad("hidden", format!("needs at least one non-zero layer width, got {:?}", self.hidden));
        }
        if self.architecture == Architecture::Shared && self.hidden.len() < 2 {
            bad("hidden", "the shared architecture needs at least two hidden layers".into());
        }
        if self.horizon > 0 && self.n_envs > 0 && self.total_timesteps < self.steps_per_update() {
            bad(
                "total_timesteps",
                format!("must cover at least one update of {} steps, got {}", self.steps_per_update(), self.total_timesteps),
            );
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Preset for the resolved environment, overlaid with `file` and then
    /// `overrides`, then validated.
    pub fn resolve(file: PartialTrainConfig, overrides: PartialTrainConfig) -> Result<Self, ConfigError> {
        let env = overrides.env_id.or(file.env_id).unwrap_or(EnvId::Bandit);
        let mut cfg = Self::preset(env);
        file.apply(&mut cfg);
        overrides.apply(&mut cfg);
        cfg.env_id = env;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses strict JSON (unknown keys rejected) and resolves it.
    pub fn from_json(text: &str, overrides: PartialTrainConfig) -> Result<Self, ConfigError> {
        let file: PartialTrainConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::resolve(file, overrides)
    }
}

/// Every [`TrainConfig`] field as optional, for config files and overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialTrainConfig {
    pub env_id: Option<EnvId>,
    pub distribution: Option<DistKind>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub n_envs: Option<usize>,
    pub base_lr: Option<f64>,
    pub ppo_epochs: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda_gae: Option<f64>,
    pub clip_eps: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub total_timesteps: Option<u64>,
    pub architecture: Option<Architecture>,
    pub hidden: Option<Vec<usize>>,
    pub normalize_advantages: Option<bool>,
    #[serde(default, deserialize_with = "double_option")]
    pub max_grad_norm: Option<Option<f64>>,
    pub clip_value_loss: Option<bool>,
    pub adam_eps: Option<f64>,
}

/// Distinguishes an absent key (`None`) from an explicit `null` (`Some(None)`).
fn double_option<'de, D>(de: D) -> Result<Option<Option<f64>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<f64>::deserialize(de).map(Some)
}

impl PartialTrainConfig {
    fn apply(self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(
            env_id, distribution, seed, horizon, n_envs, base_lr, ppo_epochs, minibatch_size, gamma,
            lambda_gae, clip_eps, c1, c2, total_timesteps, architecture, hidden, normalize_advantages,
            max_grad_norm, clip_value_loss, adam_eps
        );
    }
}

impl From<TrainConfig> for PartialTrainConfig {
    fn from(c: TrainConfig) -> Self {
        Self {
            env_id: Some(c.env_id),
            distribution: Some(c.distribution),
            seed: Some(c.seed),
            horizon: Some(c.horizon),
            n_envs: Some(c.n_envs),
            base_lr: Some(c.base_lr),
            ppo_epochs: Some(c.ppo_epochs),
            minibatch_size: Some(c.minibatch_size),
            gamma: Some(c.gamma),
            lambda_gae: Some(c.lambda_gae),
            clip_eps: Some(c.clip_eps),
            c1: Some(c.c1),
            c2: Some(c.c2),
            total_timesteps: Some(c.total_timesteps),
            architecture: Some(c.architecture),
            hidden: Some(c.hidden),
            normalize_advantages: Some(c.normalize_advantages),
            max_grad_norm: Some(c.max_grad_norm),
            clip_value_loss: Some(c.clip_value_loss),
            adam_eps: Some(c.adam_eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

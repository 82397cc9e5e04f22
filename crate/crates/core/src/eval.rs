//! Fixed-policy evaluation over consecutive episodes and multi-seed
//! aggregation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvId;
use crate::model::{head_to_dist, ActorCritic};
use crate::neural::{check_finite, NeuralError};
use crate::seeding::stream_rng;

pub const DEFAULT_EPISODES: usize = 100;

/// Episode `i` uses environment stream `EVAL_ENV_BASE + i` and action
/// stream `EVAL_ACTION_BASE + i` of the report seed.
const EVAL_ENV_BASE: u64 = 1 << 32;
const EVAL_ACTION_BASE: u64 = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Act with the distribution mean.
    Deterministic,
    /// Sample actions.
    Stochastic,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Deterministic => "deterministic",
            EvalMode::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(EvalMode::Deterministic),
            "stochastic" => Ok(EvalMode::Stochastic),
            other => Err(format!("unknown evaluation mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("model has obs_dim {model_obs} and act_dim {model_act}, but '{env}' needs {env_obs} and {env_act}")]
    Mismatch { env: EnvId, env_obs: usize, env_act: usize, model_obs: usize, model_act: usize },
    #[error("cannot aggregate an empty list of reports")]
    Empty,
    #[error("need at least one episode")]
    NoEpisodes,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env_id: EnvId,
    pub mode: EvalMode,
    pub seed: u64,
    pub per_episode_returns: Vec<f64>,
    pub episode_lengths: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub success_threshold: f64,
    pub success_rate: f64,
}

impl EvalReport {
    fn from_returns(env_id: EnvId, mode: EvalMode, seed: u64, returns: Vec<f64>, lengths: Vec<u64>) -> Self {
        let (mean, std) = mean_std(&returns);
        let success_threshold = env_id.spec().success_threshold;
        let success_rate = returns.iter().filter(|&&r| r >= success_threshold).count() as f64 / returns.len() as f64;
        Self { env_id, mode, seed, per_episode_returns: returns, episode_lengths: lengths, mean, std, success_threshold, success_rate }
    }

    /// `episode,return,length` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,return,length\n");
        for (i, (r, l)) in self.per_episode_returns.iter().zip(&self.episode_lengths).enumerate() {
            out.push_str(&format!("{i},{r},{l}\n"));
        }
        out
    }
}

/// One environment step recorded during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub step: u64,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_dims(model: &ActorCritic, env_id: EnvId) -> Result<(), EvalError> {
    let spec = env_id.spec();
    if model.obs_dim() != spec.obs_dim || model.act_dim() != spec.act_dim {
        return Err(EvalError::Mismatch {
            env: env_id,
            env_obs: spec.obs_dim,
            env_act: spec.act_dim,
            model_obs: model.obs_dim(),
            model_act: model.act_dim(),
        });
    }
    Ok(())
}

pub fn evaluate(model: &ActorCritic, env_id: EnvId, mode: EvalMode, n_episodes: usize, seed: u64) -> Result<EvalReport, EvalError> {
    run(model, env_id, mode, n_episodes, seed, None)
}

/// Like [`evaluate`], also returning every step.
pub fn evaluate_traced(
    model: &ActorCritic,
    env_id: EnvId,
    mode: EvalMode,
    n_episodes: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<TraceRow>), EvalError> {
    let mut trace = Vec::new();
    let report = run(model, env_id, mode, n_episodes, seed, Some(&mut trace))?;
    Ok((report, trace))
}

fn run(
    model: &ActorCritic,
    env_id: EnvId,
    mode: EvalMode,
    n_episodes: usize,
    seed: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<EvalReport, EvalError> {
    check_dims(model, env_id)?;
    if n_episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let mut env = env_id.make();
    let bounds = env.spec().bounds.clone();
    let max_steps = env.spec().max_episode_steps as u64;
    let mut returns = Vec::with_capacity(n_episodes);
    let mut lengths = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let mut env_rng = stream_rng(seed, EVAL_ENV_BASE + ep as u64);
        let mut act_rng = stream_rng(seed, EVAL_ACTION_BASE + ep as u64);
        let mut obs = env.reset(&mut env_rng);
        let (mut total, mut steps) = (0.0, 0u64);
        loop {
            let pass = model.forward(&obs, 1)?;
            check_finite(pass.head())?;
            let dist = head_to_dist(model.kind(), pass.head());
            let action = match mode {
                EvalMode::Deterministic => dist.deterministic_action(&bounds),
                EvalMode::Stochastic => dist.sample(&bounds, &mut act_rng).env_action,
            };
            let tr = env.step(&action);
            let fault = !tr.reward.is_finite() || tr.obs.iter().any(|v| !v.is_finite());
            if fault {
                log::warn!("evaluation episode {ep} hit a non-finite transition; ending it");
            }
            let reward = if tr.reward.is_finite() { tr.reward } else { 0.0 };
            total += reward;
            steps += 1;
            let done = tr.done || fault || steps >= max_steps;
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRow { episode: ep, step: steps - 1, obs: obs.clone(), action, reward, done });
            }
            if done {
                break;
            }
            obs = tr.obs;
        }
        returns.push(total);
        lengths.push(steps);
    }
    Ok(EvalReport::from_returns(env_id, mode, seed, returns, lengths))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub per_seed: Vec<SeedSummary>,
    /// Mean over every episode of every report.
    pub pooled_mean: f64,
    /// Smallest and largest per-seed mean.
    pub min: f64,
    pub max: f64,
    pub pooled_success_rate: f64,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateSummary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_seed: Vec<SeedSummary> = reports
        .iter()
        .map(|r| SeedSummary { seed: r.seed, mean: r.mean, std: r.std, success_rate: r.success_rate })
        .collect();
    let all: Vec<f64> = reports.iter().flat_map(|r| r.per_episode_returns.iter().copied()).collect();
    let successes: f64 = reports.iter().map(|r| r.success_rate * r.per_episode_returns.len() as f64).sum();
    Ok(AggregateSummary {
        pooled_mean: mean_std(&all).0,
        min: per_seed.iter().map(|s| s.mean).fold(f64::INFINITY, f64::min),
        max: per_seed.iter().map(|s| s.mean).fold(f64::NEG_INFINITY, f64::max),
        pooled_success_rate: successes / all.len() as f64,
        per_seed,
    })
}

/// Mean width of the across-run min-max band over the last `tail` fraction
/// of aligned learning curves. Missing points (`None`) are skipped.
pub fn band_width(curves: &[Vec<Option<f64>>], tail: f64) -> f64 {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return f64::NAN;
    }
    let start = len - ((len as f64 * tail).ceil() as usize).clamp(1, len);
    let mut widths = Vec::new();
    for i in start..len {
        let pts: Vec<f64> = curves.iter().filter_map(|c| c[i]).collect();
        if pts.len() >= 2 {
            let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            widths.push(hi - lo);
        }
    }
    if widths.is_empty() {
        f64::NAN
    } else {
        widths.iter().sum::<f64>() / widths.len() as f64
    }
}

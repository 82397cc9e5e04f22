//! On-policy trajectory storage, truncated GAE and minibatch sampling.
//!
//! Layout is `[T, N]` for per-step scalars, `[T, N, dim]` for vectors,
//! flattened so that sample `t * N + n` is step `t` of environment `n`.
//! `values` has an extra row `T` holding the bootstrap values of the
//! observations that follow the last stored step.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("buffer holds {filled} of {horizon} steps; advantages need a full buffer")]
    NotFull { filled: usize, horizon: usize },
    #[error("bootstrap values have not been set")]
    MissingBootstrap,
    #[error("buffer is already full ({0} steps)")]
    Overflow(usize),
    #[error("{field}: expected {expected} values, got {got}")]
    Shape { field: &'static str, expected: usize, got: usize },
    #[error("advantages have not been computed")]
    NoAdvantages,
}

/// One step of all `N` environments.
#[derive(Debug, Clone, Copy)]
pub struct StepBatch<'a> {
    pub obs: &'a [f64],
    pub raw_actions: &'a [f64],
    pub log_probs: &'a [f64],
    pub values: &'a [f64],
    pub rewards: &'a [f64],
    pub dones: &'a [bool],
}

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    horizon: usize,
    n_envs: usize,
    obs_dim: usize,
    act_dim: usize,
    filled: usize,
    bootstrapped: bool,
    advantages_ready: bool,
    pub obs: Vec<f64>,
    pub raw_actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(horizon: usize, n_envs: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = horizon * n_envs;
        Self {
            horizon,
            n_envs,
            obs_dim,
            act_dim,
            filled: 0,
            bootstrapped: false,
            advantages_ready: false,
            obs: Vec::with_capacity(n * obs_dim),
            raw_actions: Vec::with_capacity(n * act_dim),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n + n_envs),
            dones: Vec::with_capacity(n),
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Total samples `N * T`.
    pub fn len(&self) -> usize {
        self.horizon * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.horizon
    }

    pub fn advantages_ready(&self) -> bool {
        self.advantages_ready
    }

    pub fn push(&mut self, step: StepBatch<'_>) -> Result<(), RolloutError> {
        if self.is_full() {
            return Err(RolloutError::Overflow(self.horizon));
        }
        let n = self.n_envs;
        let checks = [
            ("obs", n * self.obs_dim, step.obs.len()),
            ("raw_actions", n * self.act_dim, step.raw_actions.len()),
            ("log_probs", n, step.log_probs.len()),
            ("values", n, step.values.len()),
            ("rewards", n, step.rewards.len()),
            ("dones", n, step.dones.len()),
        ];
        for (field, expected, got) in checks {
            if expected != got {
                return Err(RolloutError::Shape { field, expected, got });
            }
        }
        self.obs.extend_from_slice(step.obs);
        self.raw_actions.extend_from_slice(step.raw_actions);
        self.log_probs.extend_from_slice(step.log_probs);
        self.values.extend_from_slice(step.values);
        self.rewards.extend_from_slice(step.rewards);
        self.dones.extend_from_slice(step.dones);
        self.filled += 1;
        Ok(())
    }

    /// Stores `V(s_T)` for each environment.
    pub fn set_bootstrap(&mut self, values: &[f64]) -> Result<(), RolloutError> {
        if !self.is_full() {
            return Err(RolloutError::NotFull { filled: self.filled, horizon: self.horizon });
        }
        if values.len() != self.n_envs {
            return Err(RolloutError::Shape { field: "bootstrap", expected: self.n_envs, got: values.len() });
        }
        self.values.truncate(self.len());
        self.values.extend_from_slice(values);
        self.bootstrapped = true;
        Ok(())
    }

    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) -> Result<(), RolloutError> {
        if !self.is_full() {
            return Err(RolloutError::NotFull { filled: self.filled, horizon: self.horizon });
        }
        if !self.bootstrapped {
            return Err(RolloutError::MissingBootstrap);
        }
        let (adv, ret) = gae(&self.rewards, &self.values, &self.dones, self.n_envs, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
        self.advantages_ready = true;
        Ok(())
    }

    pub fn normalize_advantages(&mut self) -> Result<(), RolloutError> {
        if !self.advantages_ready {
            return Err(RolloutError::NoAdvantages);
        }
        normalize(&mut self.advantages);
        Ok(())
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.raw_actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}

/// Truncated GAE over a `[T, N]` layout. `values` carries `T + 1` rows.
/// A done flag at step `t` cuts both the bootstrap and the recursion.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let total = rewards.len();
    assert_eq!(values.len(), total + n_envs, "values need a bootstrap row");
    assert_eq!(dones.len(), total);
    let horizon = total / n_envs;
    let mut adv = vec![0.0; total];
    for n in 0..n_envs {
        let mut running = 0.0;
        for t in (0..horizon).rev() {
            let i = t * n_envs + n;
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * values[i + n_envs] * live - values[i];
            running = delta + gamma * lambda * live * running;
            adv[i] = running;
        }
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Standardizes in place: `(x - mean) / (std + 1e-8)` with population std.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
}

/// One epoch of minibatches: a fresh permutation of `0..total` cut into
/// chunks of `size` (the last chunk may be shorter). `size > total`
/// yields a single batch.
pub fn minibatches<R: Rng + ?Sized>(total: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(rng);
    idx.chunks(size.clamp(1, total.max(1))).map(<[usize]>::to_vec).collect()
}

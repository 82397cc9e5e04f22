//! Clipped-surrogate PPO: per-sample objectives, the combined minibatch
//! loss with its gradient, and the collect/update training loop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::distributions::DistKind;
use crate::envs::{ActionBounds, EnvSpec, Environment};
use crate::model::{head_terms, head_to_dist, ActorCritic};
use crate::neural::{check_finite, clip_global_norm, lr_schedule, AdamState, NeuralError};
use crate::rollout::{minibatches, RolloutBuffer, RolloutError, StepBatch};
use crate::seeding::{stream_rng, ACTION_STREAM, ENV_STREAM_BASE, INIT_STREAM, MINIBATCH_STREAM};

/// Bound on `|logp_new - logp_old|` before exponentiation.
pub const RATIO_EXP_LIMIT: f64 = 20.0;

/// Episodes averaged for `mean_episode_return_last10`.
const RECENT_EPISODES: usize = 10;

pub fn prob_ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).clamp(-RATIO_EXP_LIMIT, RATIO_EXP_LIMIT).exp()
}

pub fn clipped_surrogate(r: f64, adv: f64, eps: f64) -> f64 {
    (r * adv).min(r.clamp(1.0 - eps, 1.0 + eps) * adv)
}

pub fn value_loss(v_pred: f64, v_target: f64) -> f64 {
    (v_pred - v_target).powi(2)
}

/// Statistics of a minibatch that produced a non-finite loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinibatchDiagnostics {
    pub size: usize,
    pub mean_advantage: f64,
    pub max_abs_advantage: f64,
    pub max_abs_log_ratio: f64,
    pub max_abs_return: f64,
    pub max_abs_value: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("non-finite loss on minibatch: {0:?}")]
    NonFiniteLoss(Box<MinibatchDiagnostics>),
    #[error("environment '{env}' has obs_dim {obs_dim}, act_dim {act_dim}; model expects {model_obs}, {model_act}")]
    ModelMismatch { env: String, obs_dim: usize, act_dim: usize, model_obs: usize, model_act: usize },
}

/// Loss coefficients taken from a [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub clip_value_loss: bool,
}

impl From<&TrainConfig> for LossConfig {
    fn from(c: &TrainConfig) -> Self {
        Self { clip_eps: c.clip_eps, c1: c.c1, c2: c.c2, clip_value_loss: c.clip_value_loss }
    }
}

/// Rows gathered from a rollout buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Vec<f64>,
    pub raw_actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub old_values: Vec<f64>,
}

impl Minibatch {
    pub fn gather(buf: &RolloutBuffer, idx: &[usize]) -> Self {
        let mut mb = Self {
            obs: Vec::with_capacity(idx.len() * buf.obs_dim()),
            raw_actions: Vec::with_capacity(idx.len() * buf.act_dim()),
            old_log_probs: Vec::with_capacity(idx.len()),
            advantages: Vec::with_capacity(idx.len()),
            returns: Vec::with_capacity(idx.len()),
            old_values: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            mb.obs.extend_from_slice(buf.obs_row(i));
            mb.raw_actions.extend_from_slice(buf.action_row(i));
            mb.old_log_probs.push(buf.log_probs[i]);
            mb.advantages.push(buf.advantages[i]);
            mb.returns.push(buf.returns[i]);
            mb.old_values.push(buf.values[i]);
        }
        mb
    }

    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `-mean(clipped_surrogate)`.
    pub policy_loss: f64,
    /// `mean((v - R)^2)`, before the `c1` weight.
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// `mean((r - 1) - ln r)`.
    pub approx_kl: f64,
    pub max_ratio_deviation: f64,
    /// Parameter gradients, one vector per network of the model.
    pub grads: Vec<Vec<f64>>,
}

/// Minimized objective `-mean(surrogate) + c1 mean(value_loss) - c2 mean(H)`
/// and its gradient. Where both surrogate branches tie, the gradient follows
/// the unclipped branch; a clamped ratio exponent contributes no gradient.
pub fn combined_loss(model: &ActorCritic, mb: &Minibatch, cfg: &LossConfig) -> Result<LossOutput, PpoError> {
    let b = mb.len();
    let ad = model.act_dim();
    let hd = 2 * ad;
    let pass = model.forward(&mb.obs, b)?;
    let (head, values) = (pass.head(), pass.values());
    let inv = 1.0 / b.max(1) as f64;
    let eps = cfg.clip_eps;

    let mut head_grad = vec![0.0; b * hd];
    let mut value_grad = vec![0.0; b];
    let (mut surr_sum, mut vl_sum, mut ent_sum, mut kl_sum) = (0.0, 0.0, 0.0, 0.0);
    let (mut clipped, mut max_dev, mut max_lr) = (0usize, 0.0f64, 0.0f64);

    for i in 0..b {
        let t = head_terms(model.kind(), &head[i * hd..(i + 1) * hd], &mb.raw_actions[i * ad..(i + 1) * ad]);
        let log_ratio = t.log_prob - mb.old_log_probs[i];
        let r = prob_ratio(t.log_prob, mb.old_log_probs[i]);
        let adv = mb.advantages[i];
        let unclipped = r * adv;
        surr_sum += clipped_surrogate(r, adv, eps);
        ent_sum += t.entropy;
        kl_sum += (r - 1.0) - log_ratio.clamp(-RATIO_EXP_LIMIT, RATIO_EXP_LIMIT);
        if (r - 1.0).abs() > eps {
            clipped += 1;
        }
        max_dev = max_dev.max((r - 1.0).abs());
        max_lr = max_lr.max(log_ratio.abs());

        let takes_unclipped = unclipped <= r.clamp(1.0 - eps, 1.0 + eps) * adv;
        let d_surr = if takes_unclipped && log_ratio.abs() <= RATIO_EXP_LIMIT { unclipped } else { 0.0 };
        for j in 0..hd {
            head_grad[i * hd + j] = inv * (-d_surr * t.d_log_prob[j] - cfg.c2 * t.d_entropy[j]);
        }

        let (v, ret) = (values[i], mb.returns[i]);
        let (l, dl) = if cfg.clip_value_loss {
            let dv = v - mb.old_values[i];
            let vc = mb.old_values[i] + dv.clamp(-eps, eps);
            let (l1, l2) = (value_loss(v, ret), value_loss(vc, ret));
            if l1 >= l2 {
                (l1, 2.0 * (v - ret))
            } else {
                (l2, if dv.abs() < eps { 2.0 * (vc - ret) } else { 0.0 })
            }
        } else {
            (value_loss(v, ret), 2.0 * (v - ret))
        };
        vl_sum += l;
        value_grad[i] = inv * cfg.c1 * dl;
    }

    let policy_loss = -surr_sum * inv;
    let value_loss = vl_sum * inv;
    let entropy = ent_sum * inv;
    let loss = policy_loss + cfg.c1 * value_loss - cfg.c2 * entropy;
    if !loss.is_finite() {
        let max_abs = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        return Err(PpoError::NonFiniteLoss(Box::new(MinibatchDiagnostics {
            size: b,
            mean_advantage: mb.advantages.iter().sum::<f64>() * inv,
            max_abs_advantage: max_abs(&mb.advantages),
            max_abs_log_ratio: max_lr,
            max_abs_return: max_abs(&mb.returns),
            max_abs_value: max_abs(values),
            policy_loss,
            value_loss,
            entropy,
        })));
    }
    let grads = model.backward(&pass, &head_grad, &value_grad)?;
    Ok(LossOutput {
        loss,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv,
        approx_kl: kl_sum * inv,
        max_ratio_deviation: max_dev,
        grads,
    })
}

/// Averages over all minibatches of one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub lr_used: f64,
    /// Largest `|r - 1|` on the first minibatch of the first epoch.
    pub first_minibatch_ratio_deviation: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: u64,
    pub env_steps: u64,
    pub lr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_episode_return_last10: Option<f64>,
}

/// One row of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_index: u64,
    pub env_steps: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub length: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub config: TrainConfig,
    pub model: ActorCritic,
    pub metrics: Vec<MetricsRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

/// A run stopped early; `outcome.model` holds the last parameters that
/// completed an update.
#[derive(Debug, Clone, Error)]
#[error("training aborted during update {update}: {error}")]
pub struct TrainAbort {
    pub update: u64,
    pub error: PpoError,
    pub outcome: Box<TrainOutcome>,
}

pub struct Trainer {
    cfg: TrainConfig,
    spec: EnvSpec,
    model: ActorCritic,
    adam: Vec<AdamState>,
    envs: Vec<Box<dyn Environment>>,
    env_rngs: Vec<ChaCha8Rng>,
    action_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    obs: Vec<f64>,
    ep_return: Vec<f64>,
    ep_len: Vec<u64>,
    env_steps: u64,
    updates_done: u64,
    metrics: Vec<MetricsRecord>,
    episodes: Vec<EpisodeRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, PpoError> {
        cfg.validate()?;
        let spec = cfg.env_id.spec();
        let mut init_rng = stream_rng(cfg.seed, INIT_STREAM);
        let model =
            ActorCritic::new(cfg.distribution, cfg.architecture, spec.obs_dim, spec.act_dim, &cfg.hidden, &mut init_rng)?;
        Self::with_model(cfg, model)
    }

    /// Continues from existing parameters with fresh optimizer state.
    pub fn with_model(cfg: TrainConfig, model: ActorCritic) -> Result<Self, PpoError> {
        cfg.validate()?;
        let spec = cfg.env_id.spec();
        if model.obs_dim() != spec.obs_dim || model.act_dim() != spec.act_dim {
            return Err(PpoError::ModelMismatch {
                env: cfg.env_id.to_string(),
                obs_dim: spec.obs_dim,
                act_dim: spec.act_dim,
                model_obs: model.obs_dim(),
                model_act: model.act_dim(),
            });
        }
        let adam = model.nets().iter().map(|n| AdamState::new(n.num_params(), cfg.adam_eps)).collect();
        let n = cfg.n_envs;
        let mut envs: Vec<Box<dyn Environment>> = (0..n).map(|_| cfg.env_id.make()).collect();
        let mut env_rngs: Vec<ChaCha8Rng> =
            (0..n as u64).map(|i| stream_rng(cfg.seed, ENV_STREAM_BASE + i)).collect();
        let mut obs = Vec::with_capacity(n * spec.obs_dim);
        for (env, rng) in envs.iter_mut().zip(env_rngs.iter_mut()) {
            obs.extend(env.reset(rng));
        }
        Ok(Self {
            action_rng: stream_rng(cfg.seed, ACTION_STREAM),
            batch_rng: stream_rng(cfg.seed, MINIBATCH_STREAM),
            spec,
            model,
            adam,
            envs,
            env_rngs,
            obs,
            ep_return: vec![0.0; n],
            ep_len: vec![0; n],
            env_steps: 0,
            updates_done: 0,
            metrics: Vec::new(),
            episodes: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ActorCritic {
        &self.model
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    /// Runs every environment for `horizon` steps with the current policy.
    pub fn collect(&mut self) -> Result<RolloutBuffer, PpoError> {
        let (n, od, ad) = (self.cfg.n_envs, self.spec.obs_dim, self.spec.act_dim);
        let kind = self.model.kind();
        let mut buf = RolloutBuffer::new(self.cfg.horizon, n, od, ad);
        let mut raw = vec![0.0; n * ad];
        let mut log_probs = vec![0.0; n];
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let mut next_obs = vec![0.0; n * od];
        for _ in 0..self.cfg.horizon {
            let pass = self.model.forward(&self.obs, n)?;
            check_finite(pass.head())?;
            check_finite(pass.values())?;
            for e in 0..n {
                let dist = head_to_dist(kind, &pass.head()[e * 2 * ad..(e + 1) * 2 * ad]);
                let sample = dist.sample(&self.spec.bounds, &mut self.action_rng);
                raw[e * ad..(e + 1) * ad].copy_from_slice(&sample.raw);
                log_probs[e] = sample.log_prob;

                let tr = self.envs[e].step(&sample.env_action);
                let fault = !tr.reward.is_finite() || tr.obs.len() != od || tr.obs.iter().any(|v| !v.is_finite());
                if fault {
                    log::warn!("environment {e} produced a non-finite transition; ending its episode");
                }
                let reward = if tr.reward.is_finite() { tr.reward } else { 0.0 };
                let done = tr.done || fault;
                rewards[e] = reward;
                dones[e] = done;
                self.ep_return[e] += reward;
                self.ep_len[e] += 1;
                let slot = &mut next_obs[e * od..(e + 1) * od];
                if done {
                    self.episodes.push(EpisodeRecord {
                        episode_index: self.episodes.len() as u64,
                        env_steps: self.env_steps + e as u64 + 1,
                        episode_return: self.ep_return[e],
                        length: self.ep_len[e],
                    });
                    self.ep_return[e] = 0.0;
                    self.ep_len[e] = 0;
                    slot.copy_from_slice(&self.envs[e].reset(&mut self.env_rngs[e]));
                } else {
                    slot.copy_from_slice(&tr.obs);
                }
            }
            buf.push(StepBatch {
                obs: &self.obs,
                raw_actions: &raw,
                log_probs: &log_probs,
                values: pass.values(),
                rewards: &rewards,
                dones: &dones,
            })?;
            std::mem::swap(&mut self.obs, &mut next_obs);
            self.env_steps += n as u64;
        }
        let boot = self.model.forward(&self.obs, n)?;
        buf.set_bootstrap(boot.values())?;
        Ok(buf)
    }

    /// `K` epochs of minibatch Adam steps on a filled buffer. On error the
    /// parameters and optimizer state are restored to their values before
    /// the call.
    pub fn update(&mut self, buf: &mut RolloutBuffer) -> Result<UpdateStats, PpoError> {
        let model_snapshot = self.model.clone();
        let adam_snapshot = self.adam.clone();
        let result = self.update_inner(buf);
        if result.is_err() {
            self.model = model_snapshot;
            self.adam = adam_snapshot;
        }
        result
    }

    fn update_inner(&mut self, buf: &mut RolloutBuffer) -> Result<UpdateStats, PpoError> {
        buf.compute_gae(self.cfg.gamma, self.cfg.lambda_gae)?;
        if self.cfg.normalize_advantages {
            buf.normalize_advantages()?;
        }
        let clock = self.env_steps.saturating_sub(buf.len() as u64);
        let lr = lr_schedule(self.cfg.base_lr, clock, self.cfg.total_timesteps);
        let loss_cfg = LossConfig::from(&self.cfg);

        let mut acc = UpdateStats {
            mean_clip_fraction: 0.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            lr_used: lr,
            first_minibatch_ratio_deviation: f64::NAN,
            grad_norm: 0.0,
        };
        let mut count = 0usize;
        for _ in 0..self.cfg.ppo_epochs {
            for idx in minibatches(buf.len(), self.cfg.minibatch_size, &mut self.batch_rng) {
                let mb = Minibatch::gather(buf, &idx);
                let mut out = combined_loss(&self.model, &mb, &loss_cfg)?;
                if count == 0 {
                    acc.first_minibatch_ratio_deviation = out.max_ratio_deviation;
                }
                let norm = match self.cfg.max_grad_norm {
                    Some(max) => {
                        let mut slices: Vec<&mut [f64]> = out.grads.iter_mut().map(Vec::as_mut_slice).collect();
                        clip_global_norm(&mut slices, max)
                    }
                    None => out.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt(),
                };
                for ((net, grad), st) in self.model.nets_mut().iter_mut().zip(&out.grads).zip(&mut self.adam) {
                    net.adam_step(grad, st, lr)?;
                }
                acc.mean_clip_fraction += out.clip_fraction;
                acc.policy_loss += out.policy_loss;
                acc.value_loss += out.value_loss;
                acc.entropy += out.entropy;
                acc.approx_kl += out.approx_kl;
                acc.grad_norm += norm;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        acc.mean_clip_fraction /= c;
        acc.policy_loss /= c;
        acc.value_loss /= c;
        acc.entropy /= c;
        acc.approx_kl /= c;
        acc.grad_norm /= c;
        Ok(acc)
    }

    pub fn recent_mean_return(&self) -> Option<f64> {
        let n = self.episodes.len().min(RECENT_EPISODES);
        (n > 0).then(|| self.episodes[self.episodes.len() - n..].iter().map(|e| e.episode_return).sum::<f64>() / n as f64)
    }

    /// Collects, updates and appends one metrics record.
    pub fn step_update(&mut self) -> Result<(UpdateStats, MetricsRecord), PpoError> {
        let mut buf = self.collect()?;
        let stats = self.update(&mut buf)?;
        self.updates_done += 1;
        let rec = MetricsRecord {
            update: self.updates_done,
            env_steps: self.env_steps,
            lr: stats.lr_used,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.mean_clip_fraction,
            approx_kl: stats.approx_kl,
            mean_episode_return_last10: self.recent_mean_return(),
        };
        self.metrics.push(rec.clone());
        Ok((stats, rec))
    }

    fn into_outcome(self) -> TrainOutcome {
        TrainOutcome { config: self.cfg, model: self.model, metrics: self.metrics, episodes: self.episodes }
    }

    /// Runs every update of the configured budget. `on_update` sees each
    /// record as it is produced.
    pub fn run(mut self, mut on_update: impl FnMut(&UpdateStats, &MetricsRecord)) -> Result<TrainOutcome, TrainAbort> {
        for _ in 0..self.cfg.n_updates() {
            match self.step_update() {
                Ok((stats, rec)) => on_update(&stats, &rec),
                Err(error) => {
                    log::error!("update {} failed: {error}", self.updates_done + 1);
                    let update = self.updates_done + 1;
                    return Err(TrainAbort { update, error, outcome: Box::new(self.into_outcome()) });
                }
            }
        }
        Ok(self.into_outcome())
    }

    pub fn kind(&self) -> DistKind {
        self.model.kind()
    }
}

pub fn train(cfg: TrainConfig) -> Result<TrainOutcome, TrainAbort> {
    train_with(cfg, |_, _| {})
}

pub fn train_with(
    cfg: TrainConfig,
    on_update: impl FnMut(&UpdateStats, &MetricsRecord),
) -> Result<TrainOutcome, TrainAbort> {
    let trainer = match Trainer::new(cfg.clone()) {
        Ok(t) => t,
        Err(error) => {
            let spec = cfg.env_id.spec();
            let model = ActorCritic::zeros(cfg.distribution, cfg.architecture, spec.obs_dim, spec.act_dim, &[1])
                .expect("single-layer zero model");
            return Err(TrainAbort {
                update: 0,
                error,
                outcome: Box::new(TrainOutcome { config: cfg, model, metrics: vec![], episodes: vec![] }),
            });
        }
    };
    trainer.run(on_update)
}

/// Random minibatch of synthetic data for loss tests.
#[doc(hidden)]
pub fn synthetic_minibatch<R: Rng + ?Sized>(model: &ActorCritic, size: usize, rng: &mut R) -> Minibatch {
    let (od, ad) = (model.obs_dim(), model.act_dim());
    let obs: Vec<f64> = (0..size * od).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pass = model.forward(&obs, size).expect("shapes match");
    let mut raw = Vec::with_capacity(size * ad);
    let mut old = Vec::with_capacity(size);
    for i in 0..size {
        let dist = head_to_dist(model.kind(), &pass.head()[i * 2 * ad..(i + 1) * 2 * ad]);
        let s = dist.sample(&ActionBounds::symmetric(ad, 1.0), rng);
        old.push(s.log_prob);
        raw.extend(s.raw);
    }
    Minibatch {
        obs,
        raw_actions: raw,
        old_log_probs: old,
        advantages: (0..size).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..size).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        old_values: pass.values().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;
    use crate::model::Architecture;
    use rand::SeedableRng;

    fn model(kind: DistKind, arch: Architecture, seed: u64) -> ActorCritic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ActorCritic::new(kind, arch, 3, 2, &[6, 5], &mut rng).unwrap()
    }

    fn cfg(c1: f64, c2: f64) -> LossConfig {
        LossConfig { clip_eps: 0.2, c1, c2, clip_value_loss: false }
    }

    #[test]
    fn ratio_and_surrogate_examples() {
        assert_eq!(prob_ratio(-1.3, -1.3), 1.0);
        assert!((prob_ratio(2f64.ln(), 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(prob_ratio(50.0, 0.0), 20f64.exp());
        assert_eq!(clipped_surrogate(1.0, 2.0, 0.2), 2.0);
        assert!((clipped_surrogate(1.35, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) - -0.8).abs() < 1e-15);
        assert_eq!(value_loss(2.0, 2.0), 0.0);
        assert_eq!(value_loss(1.0, 3.0), 4.0);
        assert_eq!((value_loss(0.0, 1.0) + value_loss(0.0, -1.0)) / 2.0, 1.0);
    }

    #[test]
    fn unit_ratio_gives_vanilla_policy_gradient() {
        for kind in [DistKind::Gaussian, DistKind::Beta] {
            let m = model(kind, Architecture::Separate, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mb = synthetic_minibatch(&m, 8, &mut rng);
            let out = combined_loss(&m, &mb, &cfg(0.0, 0.0)).unwrap();
            assert!(out.max_ratio_deviation < 1e-12);
            // -mean(A * dlogp) through the actor network.
            let pass = m.forward(&mb.obs, 8).unwrap();
            let mut hg = vec![0.0; 8 * 4];
            for i in 0..8 {
                let t = head_terms(kind, &pass.head()[i * 4..(i + 1) * 4], &mb.raw_actions[i * 2..(i + 1) * 2]);
                for j in 0..4 {
                    hg[i * 4 + j] = -mb.advantages[i] * t.d_log_prob[j] / 8.0;
                }
            }
            let pg = m.backward(&pass, &hg, &[0.0; 8]).unwrap();
            for (a, b) in pg[0].iter().zip(&out.grads[0]) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn saturated_clip_has_zero_policy_gradient() {
        for kind in [DistKind::Gaussian, DistKind::Beta] {
            let m = model(kind, Architecture::Separate, 8);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut mb = synthetic_minibatch(&m, 4, &mut rng);
            for (lp, a) in mb.old_log_probs.iter_mut().zip(&mut mb.advantages) {
                *lp -= 0.5;
                *a = a.abs() + 0.1;
            }
            let out = combined_loss(&m, &mb, &cfg(0.5, 0.0)).unwrap();
            assert_eq!(out.clip_fraction, 1.0);
            assert!(out.grads[0].iter().all(|&g| g == 0.0), "{kind}");
            assert!(out.grads[1].iter().any(|&g| g != 0.0));
        }
    }

    #[test]
    fn entropy_bonus_pushes_sigma_up() {
        let m = model(DistKind::Gaussian, Architecture::Separate, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mb = synthetic_minibatch(&m, 4, &mut rng);
        mb.advantages.iter_mut().for_each(|a| *a = 0.0);
        let out = combined_loss(&m, &mb, &cfg(0.0, 0.1)).unwrap();
        // Bias of the sigma outputs in the last actor layer.
        let (sizes, params) = (m.nets()[0].sizes(), &out.grads[0]);
        let last_bias = params.len() - sizes[sizes.len() - 1];
        for j in 2..4 {
            assert!(params[last_bias + j] < 0.0);
        }
        assert!(params[last_bias] == 0.0 && params[last_bias + 1] == 0.0);
    }

    fn full_fd(kind: DistKind, arch: Architecture, clip_value: bool) {
        let mut m = model(kind, arch, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut mb = synthetic_minibatch(&m, 4, &mut rng);
        // Ratios spread over both clip regions, away from the kinks.
        for (lp, d) in mb.old_log_probs.iter_mut().zip([0.05, -0.4, 0.5, -0.1]) {
            *lp += d;
        }
        for (v, d) in mb.old_values.iter_mut().zip([0.05, -0.6, 0.7, 0.0]) {
            *v += d;
        }
        let c = LossConfig { clip_eps: 0.2, c1: 0.5, c2: 0.01, clip_value_loss: clip_value };
        let out = combined_loss(&m, &mb, &c).unwrap();
        let h = 1e-6;
        for k in 0..m.nets().len() {
            for j in 0..m.nets()[k].num_params() {
                let orig = m.nets()[k].params()[j];
                m.nets_mut()[k].params_mut()[j] = orig + h;
                let up = combined_loss(&m, &mb, &c).unwrap().loss;
                m.nets_mut()[k].params_mut()[j] = orig - h;
                let dn = combined_loss(&m, &mb, &c).unwrap().loss;
                m.nets_mut()[k].params_mut()[j] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = out.grads[k][j];
                assert!(
                    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-4),
                    "{kind} {arch} net {k} param {j}: fd {fd} analytic {an}"
                );
            }
        }
    }

    #[test]
    fn full_loss_matches_finite_differences() {
        for kind in [DistKind::Gaussian, DistKind::Beta] {
            full_fd(kind, Architecture::Separate, false);
            full_fd(kind, Architecture::Shared, false);
        }
        full_fd(DistKind::Beta, Architecture::Separate, true);
    }

    #[test]
    fn non_finite_loss_reports_diagnostics() {
        let m = model(DistKind::Gaussian, Architecture::Separate, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mb = synthetic_minibatch(&m, 4, &mut rng);
        mb.returns[2] = f64::INFINITY;
        match combined_loss(&m, &mb, &cfg(0.5, 0.0)) {
            Err(PpoError::NonFiniteLoss(d)) => assert_eq!(d.max_abs_return, f64::INFINITY),
            other => panic!("{other:?}"),
        }
    }

    fn tiny(env: EnvId, kind: DistKind) -> TrainConfig {
        let mut c = TrainConfig::preset(env);
        c.distribution = kind;
        c.horizon = 32;
        c.n_envs = 2;
        c.ppo_epochs = 2;
        c.minibatch_size = 16;
        c.hidden = vec![8, 8];
        c.total_timesteps = 64;
        c
    }

    #[test]
    fn one_update_when_budget_is_one_batch() {
        let out = train(tiny(EnvId::Lander, DistKind::Beta)).unwrap();
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].env_steps, 64);
        assert!((0.0..=1.0).contains(&out.metrics[0].clip_fraction));
    }

    #[test]
    fn first_minibatch_ratios_are_one() {
        for env in EnvId::ALL {
            for kind in [DistKind::Gaussian, DistKind::Beta] {
                let mut t = Trainer::new(tiny(env, kind)).unwrap();
                for _ in 0..2 {
                    let (stats, _) = t.step_update().unwrap();
                    assert!(stats.first_minibatch_ratio_deviation < 1e-6, "{env} {kind}");
                }
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let mut c = tiny(EnvId::Track, DistKind::Gaussian);
        c.total_timesteps = 192;
        let a = train(c.clone()).unwrap();
        let b = train(c).unwrap();
        let ja: Vec<String> = a.metrics.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
        let jb: Vec<String> = b.metrics.iter().map(|m| serde_json::to_string(m).unwrap()).collect();
        assert_eq!(ja, jb);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn lr_anneals_on_environment_steps() {
        let mut c = tiny(EnvId::Bandit, DistKind::Beta);
        c.total_timesteps = 256;
        let out = train(c.clone()).unwrap();
        let lrs: Vec<f64> = out.metrics.iter().map(|m| m.lr).collect();
        assert_eq!(lrs.len(), 4);
        for (u, lr) in lrs.iter().enumerate() {
            assert!((lr - c.base_lr * (1.0 - u as f64 / 4.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_parameters_abort_with_model() {
        let c = tiny(EnvId::Lander, DistKind::Gaussian);
        let spec = c.env_id.spec();
        let mut m = ActorCritic::zeros(c.distribution, c.architecture, spec.obs_dim, spec.act_dim, &c.hidden).unwrap();
        m.nets_mut()[0].params_mut()[0] = f64::NAN;
        m.nets_mut()[0].params_mut()[1] = 1.0;
        let err = Trainer::with_model(c, m.clone()).unwrap().run(|_, _| {}).unwrap_err();
        assert_eq!(err.update, 1);
        assert!(matches!(err.error, PpoError::Neural(NeuralError::NonFiniteParameter { .. })));
        assert!(err.outcome.model.nets()[0].params()[0].is_nan());
    }

    #[test]
    fn invalid_config_aborts_before_training() {
        let mut c = tiny(EnvId::Bandit, DistKind::Beta);
        c.clip_eps = 0.0;
        let err = train(c).unwrap_err();
        assert!(matches!(err.error, PpoError::Config(_)));
        assert!(err.outcome.metrics.is_empty());
    }
}

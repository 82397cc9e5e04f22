//! Actor-critic networks and the mapping from policy-head outputs to
//! distribution parameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    beta_entropy_1d, beta_entropy_grad_1d, beta_log_prob_1d, beta_log_prob_grad_1d, gaussian_entropy_1d,
    gaussian_log_prob_1d, gaussian_log_prob_grad_1d, BetaParams, DistKind, GaussianParams, PolicyDist,
};
use crate::neural::{InitGains, Mlp, NeuralError, Tape};
use crate::special::{sigmoid, softplus};

/// Lower bound added to the Gaussian scale.
pub const SIGMA_FLOOR: f64 = 1e-3;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_GAIN: f64 = 0.01;
const VALUE_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Independent actor and critic networks.
    Separate,
    /// A common trunk feeding one-hidden-layer actor and critic heads.
    Shared,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Separate => "separate",
            Architecture::Shared => "shared",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separate" => Ok(Architecture::Separate),
            "shared" => Ok(Architecture::Shared),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

/// `alpha` or `beta` from a head output, kept strictly above one even when
/// `softplus` underflows.
pub fn beta_shape(x: f64) -> f64 {
    (1.0 + softplus(x)).max(1.0 + f64::EPSILON)
}

pub fn gaussian_scale(x: f64) -> f64 {
    softplus(x) + SIGMA_FLOOR
}

/// Distribution parameters from one head row `[first(d), second(d)]`.
pub fn head_to_dist(kind: DistKind, row: &[f64]) -> PolicyDist {
    let d = row.len() / 2;
    let (a, b) = row.split_at(d);
    match kind {
        DistKind::Gaussian => {
            let sigma = b.iter().map(|&x| gaussian_scale(x)).collect();
            PolicyDist::Gaussian(GaussianParams::new(a.to_vec(), sigma).expect("scale is positive"))
        }
        DistKind::Beta => {
            let alpha = a.iter().map(|&x| beta_shape(x)).collect();
            let beta = b.iter().map(|&x| beta_shape(x)).collect();
            PolicyDist::Beta(BetaParams::new(alpha, beta).expect("shapes exceed one"))
        }
    }
}

/// Log-density, entropy and their gradients with respect to a head row.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

pub fn head_terms(kind: DistKind, row: &[f64], x: &[f64]) -> HeadTerms {
    let d = row.len() / 2;
    debug_assert_eq!(x.len(), d);
    let mut t = HeadTerms { log_prob: 0.0, entropy: 0.0, d_log_prob: vec![0.0; 2 * d], d_entropy: vec![0.0; 2 * d] };
    for i in 0..d {
        let (p, q) = (row[i], row[d + i]);
        match kind {
            DistKind::Gaussian => {
                let s = gaussian_scale(q);
                let ds = sigmoid(q);
                t.log_prob += gaussian_log_prob_1d(p, s, x[i]);
                t.entropy += gaussian_entropy_1d(s);
                let (gm, gs) = gaussian_log_prob_grad_1d(p, s, x[i]);
                t.d_log_prob[i] = gm;
                t.d_log_prob[d + i] = gs * ds;
                t.d_entropy[d + i] = ds / s;
            }
            DistKind::Beta => {
                let (a, b) = (beta_shape(p), beta_shape(q));
                let (da, db) = (sigmoid(p), sigmoid(q));
                t.log_prob += beta_log_prob_1d(a, b, x[i]);
                t.entropy += beta_entropy_1d(a, b);
                let (ga, gb) = beta_log_prob_grad_1d(a, b, x[i]);
                t.d_log_prob[i] = ga * da;
                t.d_log_prob[d + i] = gb * db;
                let (ha, hb) = beta_entropy_grad_1d(a, b);
                t.d_entropy[i] = ha * da;
                t.d_entropy[d + i] = hb * db;
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    kind: DistKind,
    architecture: Architecture,
    obs_dim: usize,
    act_dim: usize,
    hidden: Vec<usize>,
    /// Separate: `[actor, critic]`. Shared: `[trunk, actor_head, critic_head]`.
    nets: Vec<Mlp>,
}

/// Batched forward result.
#[derive(Debug, Clone)]
pub struct ModelPass {
    batch: usize,
    tapes: Vec<Tape>,
}

impl ModelPass {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Policy-head rows, `2 * act_dim` values each.
    pub fn head(&self) -> &[f64] {
        self.tapes[self.tapes.len() - 2].output()
    }

    pub fn values(&self) -> &[f64] {
        self.tapes[self.tapes.len() - 1].output()
    }
}

impl ActorCritic {
    fn layouts(
        architecture: Architecture,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
    ) -> Result<Vec<(Vec<usize>, InitGains, bool)>, NeuralError> {
        let with = |input: usize, mid: &[usize], out: usize| {
            let mut s = vec![input];
            s.extend_from_slice(mid);
            s.push(out);
            s
        };
        let policy = InitGains { hidden: HIDDEN_GAIN, output: POLICY_GAIN };
        let value = InitGains { hidden: HIDDEN_GAIN, output: VALUE_GAIN };
        Ok(match architecture {
            Architecture::Separate => vec![
                (with(obs_dim, hidden, 2 * act_dim), policy, false),
                (with(obs_dim, hidden, 1), value, false),
            ],
            Architecture::Shared => {
                if hidden.len() < 2 {
                    return Err(NeuralError::LayerSizes(hidden.to_vec()));
                }
                let (trunk, head) = hidden.split_at(hidden.len() - 1);
                let mut trunk_sizes = vec![obs_dim];
                trunk_sizes.extend_from_slice(trunk);
                let trunk_gains = InitGains { hidden: HIDDEN_GAIN, output: HIDDEN_GAIN };
                let feat = *trunk.last().expect("non-empty trunk");
                vec![
                    (trunk_sizes, trunk_gains, true),
                    (with(feat, head, 2 * act_dim), policy, false),
                    (with(feat, head, 1), value, false),
                ]
            }
        })
    }

    /// Orthogonally initialized networks.
    pub fn new<R: Rng + ?Sized>(
        kind: DistKind,
        architecture: Architecture,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let nets = Self::layouts(architecture, obs_dim, act_dim, hidden)?
            .into_iter()
            .map(|(sizes, gains, act)| Mlp::orthogonal(&sizes, gains, act, rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { kind, architecture, obs_dim, act_dim, hidden: hidden.to_vec(), nets })
    }

    /// Zero-initialized networks with the same layout as [`ActorCritic::new`].
    pub fn zeros(
        kind: DistKind,
        architecture: Architecture,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
    ) -> Result<Self, NeuralError> {
        let nets = Self::layouts(architecture, obs_dim, act_dim, hidden)?
            .into_iter()
            .map(|(sizes, _, act)| Mlp::zeros(&sizes, act))
            .collect::<Result<_, _>>()?;
        Ok(Self { kind, architecture, obs_dim, act_dim, hidden: hidden.to_vec(), nets })
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    /// Names used when serializing each network.
    pub fn net_names(&self) -> &'static [&'static str] {
        match self.architecture {
            Architecture::Separate => &["actor", "critic"],
            Architecture::Shared => &["trunk", "actor_head", "critic_head"],
        }
    }

    pub fn num_params(&self) -> usize {
        self.nets.iter().map(Mlp::num_params).sum()
    }

    pub fn forward(&self, obs: &[f64], batch: usize) -> Result<ModelPass, NeuralError> {
        let tapes = match self.architecture {
            Architecture::Separate => vec![self.nets[0].forward_batch(obs, batch)?, self.nets[1].forward_batch(obs, batch)?],
            Architecture::Shared => {
                let trunk = self.nets[0].forward_batch(obs, batch)?;
                let actor = self.nets[1].forward_batch(trunk.output(), batch)?;
                let critic = self.nets[2].forward_batch(trunk.output(), batch)?;
                vec![trunk, actor, critic]
            }
        };
        Ok(ModelPass { batch, tapes })
    }

    /// Parameter gradients per network given dLoss/dHead and dLoss/dValue.
    pub fn backward(&self, pass: &ModelPass, head_grad: &[f64], value_grad: &[f64]) -> Result<Vec<Vec<f64>>, NeuralError> {
        match self.architecture {
            Architecture::Separate => {
                let a = self.nets[0].backward(&pass.tapes[0], head_grad)?;
                let c = self.nets[1].backward(&pass.tapes[1], value_grad)?;
                Ok(vec![a.params, c.params])
            }
            Architecture::Shared => {
                let a = self.nets[1].backward(&pass.tapes[1], head_grad)?;
                let c = self.nets[2].backward(&pass.tapes[2], value_grad)?;
                let feat: Vec<f64> = a.input.iter().zip(&c.input).map(|(x, y)| x + y).collect();
                let t = self.nets[0].backward(&pass.tapes[0], &feat)?;
                Ok(vec![t.params, a.params, c.params])
            }
        }
    }

    /// Policy distribution and value for a single observation.
    pub fn policy(&self, obs: &[f64]) -> Result<(PolicyDist, f64), NeuralError> {
        let pass = self.forward(obs, 1)?;
        Ok((head_to_dist(self.kind, pass.head()), pass.values()[0]))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NeuralError> {
        Ok(self.policy(obs)?.1)
    }
}

//! Desk-scale bounded-action environments and the raw-action mapping layer.
//!
//! Three environments are provided, selected by string id:
//!
//! * `bandit`: one-step episode, reward equal to the action in `[-1, 1]`.
//!   The optimum sits on the upper bound.
//! * `lander`: a point mass descending under gravity with a main engine
//!   (`[0, 1]`) and a lateral thruster (`[-1, 1]`).
//! * `track`: a kinematic car following a procedurally generated track of
//!   tiles, steering in `[-1, 1]` and a merged throttle/brake pedal in
//!   `[-1, 1]`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::DistKind;

/// Dynamics and reward constants for every environment.
pub mod consts {
    pub const BANDIT_SUCCESS: f64 = 0.95;

    pub const LANDER_DT: f64 = 0.05;
    pub const LANDER_GRAVITY: f64 = 1.0;
    pub const LANDER_MAIN_GAIN: f64 = 2.0;
    pub const LANDER_LATERAL_GAIN: f64 = 1.0;
    pub const LANDER_SHAPING: f64 = 10.0;
    pub const LANDER_MAIN_COST: f64 = 0.03;
    pub const LANDER_LATERAL_COST: f64 = 0.003;
    pub const LANDER_PAD_HALF_WIDTH: f64 = 0.2;
    pub const LANDER_SAFE_SPEED: f64 = 0.5;
    pub const LANDER_TERMINAL_REWARD: f64 = 100.0;
    pub const LANDER_START_HEIGHT: f64 = 1.0;
    pub const LANDER_MAX_STEPS: usize = 500;
    pub const LANDER_SUCCESS: f64 = 200.0;

    pub const TRACK_TILES: usize = 300;
    pub const TRACK_ARCS: usize = 12;
    pub const TRACK_ARC_MIN_LEN: f64 = 10.0;
    pub const TRACK_ARC_MAX_LEN: f64 = 25.0;
    pub const TRACK_MAX_CURVATURE: f64 = 0.5;
    pub const TRACK_MIN_CURVATURE: f64 = 0.1;
    pub const TRACK_DT: f64 = 0.1;
    pub const TRACK_THROTTLE_GAIN: f64 = 1.0;
    pub const TRACK_BRAKE_GAIN: f64 = 2.0;
    pub const TRACK_DRAG: f64 = 0.05;
    pub const TRACK_STEER_GAIN: f64 = 2.0;
    pub const TRACK_TILES_PER_UNIT: f64 = 10.0;
    pub const TRACK_HALF_WIDTH: f64 = 1.0;
    pub const TRACK_TOTAL_TILE_REWARD: f64 = 1000.0;
    pub const TRACK_FRAME_PENALTY: f64 = 0.1;
    pub const TRACK_OFF_PENALTY: f64 = 100.0;
    pub const TRACK_MAX_STEPS: usize = 1000;
    pub const TRACK_LOOKAHEAD: [usize; 3] = [0, 5, 10];
    pub const TRACK_SUCCESS: f64 = 900.0;
}

use consts::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("unknown environment '{0}' (expected bandit, lander or track)")]
    UnknownEnv(String),
    #[error("invalid action bounds: low {low:?} must be element-wise below high {high:?}")]
    InvalidBounds { low: Vec<f64>, high: Vec<f64> },
}

/// Per-dimension action box `[low, high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, EnvError> {
        if low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(EnvError::InvalidBounds { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(dim: usize, h: f64) -> Self {
        Self { low: vec![-h; dim], high: vec![h; dim] }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().zip(self.low.iter().zip(&self.high)).all(|(x, (l, h))| x >= l && x <= h)
    }
}

/// Maps a raw policy action into the environment's action box: clipping
/// for Gaussian, `low + raw * (high - low)` for Beta.
pub fn map_action(raw: &[f64], bounds: &ActionBounds, kind: DistKind) -> Vec<f64> {
    raw.iter()
        .zip(bounds.low.iter().zip(&bounds.high))
        .map(|(&x, (&lo, &hi))| match kind {
            DistKind::Gaussian => x.clamp(lo, hi),
            DistKind::Beta => (lo + x * (hi - lo)).clamp(lo, hi),
        })
        .collect()
}

/// Splits a merged pedal command into mutually exclusive
/// `(throttle, brake)`.
pub fn split_pedal(u: f64) -> (f64, f64) {
    let u = u.clamp(-1.0, 1.0);
    if u >= 0.0 {
        (u, 0.0)
    } else {
        (0.0, -u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub bounds: ActionBounds,
    pub max_episode_steps: usize,
    pub success_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    SingleStep,
    Landed,
    Crashed,
    OffTrack,
    TrackComplete,
    TimeLimit,
    /// The environment produced a non-finite state.
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub cause: Option<TerminalCause>,
    pub tiles_visited: usize,
}

impl StepInfo {
    pub fn landed(&self) -> bool {
        self.cause == Some(TerminalCause::Landed)
    }

    pub fn crashed(&self) -> bool {
        self.cause == Some(TerminalCause::Crashed)
    }

    pub fn off_track(&self) -> bool {
        self.cause == Some(TerminalCause::OffTrack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a fresh episode and returns its first observation.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one step with an action inside the spec's bounds.
    /// Out-of-bounds components are clamped.
    fn step(&mut self, action: &[f64]) -> Transition;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Bandit,
    Lander,
    Track,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Bandit, EnvId::Lander, EnvId::Track];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Bandit => "bandit",
            EnvId::Lander => "lander",
            EnvId::Track => "track",
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvId::Bandit => Box::new(BoundaryBandit::new()),
            EnvId::Lander => Box::new(PointLander::new()),
            EnvId::Track => Box::new(TrackFollow::new()),
        }
    }

    pub fn spec(self) -> EnvSpec {
        self.make().spec().clone()
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bandit" => Ok(EnvId::Bandit),
            "lander" => Ok(EnvId::Lander),
            "track" => Ok(EnvId::Track),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }
}

fn clamp_to(action: &[f64], bounds: &ActionBounds) -> Vec<f64> {
    map_action(action, bounds, DistKind::Gaussian)
}

// ---------------------------------------------------------------------------
// BoundaryBandit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BoundaryBandit {
    spec: EnvSpec,
}

impl BoundaryBandit {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                obs_dim: 1,
                act_dim: 1,
                bounds: ActionBounds::symmetric(1, 1.0),
                max_episode_steps: 1,
                success_threshold: BANDIT_SUCCESS,
            },
        }
    }
}

impl Default for BoundaryBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for BoundaryBandit {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }

    fn step(&mut self, action: &[f64]) -> Transition {
        let a = clamp_to(action, &self.spec.bounds)[0];
        Transition {
            obs: vec![1.0],
            reward: a,
            done: true,
            info: StepInfo { cause: Some(TerminalCause::SingleStep), tiles_visited: 0 },
        }
    }
}

// ---------------------------------------------------------------------------
// PointLander
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl LanderState {
    fn potential(&self) -> f64 {
        self.x.hypot(self.y) + self.vx.hypot(self.vy)
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.y, self.vx, self.vy]
    }
}

#[derive(Debug, Clone)]
pub struct PointLander {
    spec: EnvSpec,
    state: LanderState,
    steps: usize,
}

impl PointLander {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                obs_dim: 4,
                act_dim: 2,
                bounds: ActionBounds { low: vec![0.0, -1.0], high: vec![1.0, 1.0] },
                max_episode_steps: LANDER_MAX_STEPS,
                success_threshold: LANDER_SUCCESS,
            },
            state: LanderState { x: 0.0, y: LANDER_START_HEIGHT, vx: 0.0, vy: 0.0 },
            steps: 0,
        }
    }

    pub fn state(&self) -> LanderState {
        self.state
    }

    /// Places the lander at an arbitrary state, restarting the step count.
    pub fn set_state(&mut self, state: LanderState) {
        self.state = state;
        self.steps = 0;
    }
}

impl Default for PointLander {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointLander {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let x = rng.gen_range(-1.0..1.0);
        self.set_state(LanderState { x, y: LANDER_START_HEIGHT, vx: 0.0, vy: 0.0 });
        self.state.obs()
    }

    fn step(&mut self, action: &[f64]) -> Transition {
        let a = clamp_to(action, &self.spec.bounds);
        let (main, lateral) = (a[0], a[1]);
        let before = self.state;
        let s = &mut self.state;
        // Explicit Euler: positions advance with the pre-step velocity.
        s.x += before.vx * LANDER_DT;
        s.y += before.vy * LANDER_DT;
        s.vy += (LANDER_MAIN_GAIN * main - LANDER_GRAVITY) * LANDER_DT;
        s.vx += LANDER_LATERAL_GAIN * lateral * LANDER_DT;
        self.steps += 1;

        let after = self.state;
        let mut reward = LANDER_SHAPING * (before.potential() - after.potential())
            - LANDER_MAIN_COST * main
            - LANDER_LATERAL_COST * lateral.abs();

        let mut cause = None;
        if after.y <= 0.0 {
            let speed = after.vx.hypot(after.vy);
            if after.x.abs() <= LANDER_PAD_HALF_WIDTH && speed <= LANDER_SAFE_SPEED {
                reward += LANDER_TERMINAL_REWARD;
                cause = Some(TerminalCause::Landed);
            } else {
                reward -= LANDER_TERMINAL_REWARD;
                cause = Some(TerminalCause::Crashed);
            }
        } else if self.steps >= LANDER_MAX_STEPS {
            cause = Some(TerminalCause::TimeLimit);
        }
        Transition { obs: after.obs(), reward, done: cause.is_some(), info: StepInfo { cause, tiles_visited: 0 } }
    }
}

// ---------------------------------------------------------------------------
// TrackFollow
// ---------------------------------------------------------------------------

/// Generates a per-tile curvature profile: `TRACK_ARCS` disjoint arcs with
/// random lengths and curvatures on a straight background, smoothed by a
/// three-tile moving average.
pub fn generate_track(rng: &mut dyn RngCore) -> Vec<f64> {
    let lengths: Vec<usize> = (0..TRACK_ARCS)
        .map(|_| rng.gen_range(TRACK_ARC_MIN_LEN..=TRACK_ARC_MAX_LEN).round() as usize)
        .collect();
    let slack = TRACK_TILES - lengths.iter().sum::<usize>();
    // Random composition of the straight tiles into the gaps before each arc.
    let mut offsets: Vec<usize> = (0..TRACK_ARCS).map(|_| rng.gen_range(0..=slack)).collect();
    offsets.sort_unstable();

    let mut raw = vec![0.0; TRACK_TILES];
    let mut start = 0;
    for (i, &len) in lengths.iter().enumerate() {
        let kappa = loop {
            let k: f64 = rng.gen_range(-TRACK_MAX_CURVATURE..TRACK_MAX_CURVATURE);
            if k.abs() >= TRACK_MIN_CURVATURE {
                break k;
            }
        };
        let first = start + offsets[i];
        raw[first..first + len].fill(kappa);
        start += len;
    }

    (0..TRACK_TILES)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(TRACK_TILES - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackState {
    /// Lateral offset from the centre line.
    pub d: f64,
    /// Heading error.
    pub phi: f64,
    pub v: f64,
    /// Progress along the track in tiles.
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct TrackFollow {
    spec: EnvSpec,
    curvature: Vec<f64>,
    state: TrackState,
    visited: usize,
    steps: usize,
}

impl TrackFollow {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                obs_dim: 7,
                act_dim: 2,
                bounds: ActionBounds::symmetric(2, 1.0),
                max_episode_steps: TRACK_MAX_STEPS,
                success_threshold: TRACK_SUCCESS,
            },
            curvature: vec![0.0; TRACK_TILES],
            state: TrackState::default(),
            visited: 0,
            steps: 0,
        }
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn state(&self) -> TrackState {
        self.state
    }

    pub fn tiles_visited(&self) -> usize {
        self.visited
    }

    /// Restarts on a caller-supplied curvature profile.
    pub fn reset_with_track(&mut self, curvature: Vec<f64>) -> Vec<f64> {
        assert_eq!(curvature.len(), TRACK_TILES);
        self.curvature = curvature;
        self.state = TrackState::default();
        self.visited = 0;
        self.steps = 0;
        self.obs()
    }

    /// Curvature at `offset` tiles ahead of progress `p`; straight past the end.
    pub fn curvature_at(&self, p: f64, offset: usize) -> f64 {
        let idx = p.max(0.0).floor() as usize + offset;
        self.curvature.get(idx).copied().unwrap_or(0.0)
    }

    fn obs(&self) -> Vec<f64> {
        let s = self.state;
        let mut obs = vec![s.d, s.phi, s.v];
        obs.extend(TRACK_LOOKAHEAD.iter().map(|&k| self.curvature_at(s.p, k)));
        obs.push(s.p / TRACK_TILES as f64);
        obs
    }
}

impl Default for TrackFollow {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for TrackFollow {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let track = generate_track(rng);
        self.reset_with_track(track)
    }

    fn step(&mut self, action: &[f64]) -> Transition {
        let a = clamp_to(action, &self.spec.bounds);
        let (steer, pedal) = (a[0], a[1]);
        let (throttle, brake) = split_pedal(pedal);
        let kappa = self.curvature_at(self.state.p, 0);
        let s = &mut self.state;
        s.v = (s.v + (TRACK_THROTTLE_GAIN * throttle - TRACK_BRAKE_GAIN * brake - TRACK_DRAG * s.v) * TRACK_DT).max(0.0);
        s.phi = (s.phi + (TRACK_STEER_GAIN * steer - kappa * s.v) * TRACK_DT).clamp(-FRAC_PI_2, FRAC_PI_2);
        s.d += s.v * s.phi.sin() * TRACK_DT;
        s.p += s.v * s.phi.cos() * TRACK_DT * TRACK_TILES_PER_UNIT;
        self.steps += 1;

        let now_visited = (s.p.floor() as usize).min(TRACK_TILES);
        let fresh = now_visited.saturating_sub(self.visited);
        self.visited = self.visited.max(now_visited);
        let mut reward =
            fresh as f64 * (TRACK_TOTAL_TILE_REWARD / TRACK_TILES as f64) - TRACK_FRAME_PENALTY;

        let cause = if s.d.abs() > TRACK_HALF_WIDTH {
            reward -= TRACK_OFF_PENALTY;
            Some(TerminalCause::OffTrack)
        } else if self.visited == TRACK_TILES {
            Some(TerminalCause::TrackComplete)
        } else if self.steps >= TRACK_MAX_STEPS {
            Some(TerminalCause::TimeLimit)
        } else {
            None
        };
        Transition {
            obs: self.obs(),
            reward,
            done: cause.is_some(),
            info: StepInfo { cause, tiles_visited: self.visited },
        }
    }
}

/// Hand-coded controllers that solve each environment; used as sanity
/// oracles for the dynamics constants.
pub mod heuristics {
    use super::*;

    pub fn bandit(_obs: &[f64]) -> Vec<f64> {
        vec![1.0]
    }

    /// Steers over the pad, then descends at a controlled rate.
    pub fn lander(obs: &[f64]) -> Vec<f64> {
        let (x, y, vx, vy) = (obs[0], obs[1], obs[2], obs[3]);
        let lateral = (-1.5 * x - 2.0 * vx).clamp(-1.0, 1.0);
        let target_vy = if x.abs() > 0.1 { 0.0 } else { -(0.15 + 0.4 * y) };
        let main = (0.5 + 2.0 * (target_vy - vy)).clamp(0.0, 1.0);
        vec![main, lateral]
    }

    /// Feed-forward curvature compensation plus heading/offset feedback,
    /// cruising at speed 2.
    pub fn track(obs: &[f64]) -> Vec<f64> {
        let (d, phi, v, kappa) = (obs[0], obs[1], obs[2], obs[3]);
        let steer = (kappa * v / TRACK_STEER_GAIN - 1.5 * phi - 0.8 * d).clamp(-1.0, 1.0);
        let pedal = (TRACK_DRAG * v + 2.0 * (2.0 - v)).clamp(-1.0, 1.0);
        vec![steer, pedal]
    }
}

//! Per-dimension Gaussian and Beta action distributions.
//!
//! A policy over `d` action dimensions is a product of `d` independent
//! one-dimensional distributions, so every joint quantity (log-density,
//! entropy) is a sum over dimensions and every parameter gradient is
//! computed per dimension.
//!
//! Raw Gaussian actions live on the real line and are clipped to the
//! environment bounds. Raw Beta actions live in `[0, 1]` and are mapped
//! affinely onto the bounds, so they never leave the action space.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{map_action, ActionBounds};
use crate::special::{ln_beta_fn, psi, psi1};

/// Raw Beta actions are clamped to `[BETA_CLAMP, 1 - BETA_CLAMP]` before any
/// logarithm is taken.
pub const BETA_CLAMP: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("gaussian sigma must be positive and finite, got {0} in dimension {1}")]
    NonPositiveSigma(f64, usize),
    #[error("beta parameters must exceed 1, got alpha={alpha}, beta={beta} in dimension {dim}")]
    BetaBelowOne { alpha: f64, beta: f64, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Which family a policy head produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Gaussian,
    Beta,
}

impl DistKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistKind::Gaussian => "gaussian",
            DistKind::Beta => "beta",
        }
    }
}

impl std::fmt::Display for DistKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DistKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(DistKind::Gaussian),
            "beta" => Ok(DistKind::Beta),
            other => Err(format!("unknown distribution '{other}' (expected gaussian or beta)")),
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar (one-dimensional) building blocks.
// ---------------------------------------------------------------------------

pub fn gaussian_log_prob_1d(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    -sigma.ln() - HALF_LN_2PI - 0.5 * z * z
}

/// Gradient of the Gaussian log-density with respect to `(mu, sigma)`.
pub fn gaussian_log_prob_grad_1d(mu: f64, sigma: f64, x: f64) -> (f64, f64) {
    let diff = x - mu;
    let s2 = sigma * sigma;
    (diff / s2, (diff * diff - s2) / (s2 * sigma))
}

pub fn gaussian_entropy_1d(sigma: f64) -> f64 {
    0.5 + HALF_LN_2PI + sigma.ln()
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP)
}

pub fn beta_log_prob_1d(alpha: f64, beta: f64, x: f64) -> f64 {
    let x = clamp_unit(x);
    -ln_beta_fn(alpha, beta) + (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p()
}

/// Gradient of the Beta log-density with respect to `(alpha, beta)`.
pub fn beta_log_prob_grad_1d(alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let x = clamp_unit(x);
    let common = psi(alpha + beta);
    (x.ln() - psi(alpha) + common, (-x).ln_1p() - psi(beta) + common)
}

pub fn beta_entropy_1d(alpha: f64, beta: f64) -> f64 {
    ln_beta_fn(alpha, beta) - (alpha - 1.0) * psi(alpha) - (beta - 1.0) * psi(beta)
        + (alpha + beta - 2.0) * psi(alpha + beta)
}

/// Gradient of the Beta entropy with respect to `(alpha, beta)`.
pub fn beta_entropy_grad_1d(alpha: f64, beta: f64) -> (f64, f64) {
    let shared = (alpha + beta - 2.0) * psi1(alpha + beta);
    (shared - (alpha - 1.0) * psi1(alpha), shared - (beta - 1.0) * psi1(beta))
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma(shape, 1) variate by the Marsaglia–Tsang squeeze method. Valid for
/// `shape >= 1`, which holds for every Beta policy parameter.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = sample_standard_normal(rng);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d * v;
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn sample_beta_1d<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let ga = sample_gamma(alpha, rng);
    let gb = sample_gamma(beta, rng);
    ga / (ga + gb)
}

// ---------------------------------------------------------------------------
// Vector parameter types.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, DistError> {
        if mu.len() != sigma.len() {
            return Err(DistError::Dimension { expected: mu.len(), got: sigma.len() });
        }
        if let Some((i, &s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
            return Err(DistError::NonPositiveSigma(s, i));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BetaParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, DistError> {
        if alpha.len() != beta.len() {
            return Err(DistError::Dimension { expected: alpha.len(), got: beta.len() });
        }
        for (dim, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
            if !(a > 1.0 && b > 1.0 && a.is_finite() && b.is_finite()) {
                return Err(DistError::BetaBelowOne { alpha: a, beta: b, dim });
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// A sampled action: the raw draw in distribution support, its joint
/// log-density, and the action the environment receives.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub raw: Vec<f64>,
    pub log_prob: f64,
    pub env_action: Vec<f64>,
}

/// Per-dimension gradient of a joint log-density with respect to the two
/// parameter vectors: `(mu, sigma)` for Gaussian, `(alpha, beta)` for Beta.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// A Gaussian or Beta policy distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDist {
    Gaussian(GaussianParams),
    Beta(BetaParams),
}

impl PolicyDist {
    pub fn kind(&self) -> DistKind {
        match self {
            PolicyDist::Gaussian(_) => DistKind::Gaussian,
            PolicyDist::Beta(_) => DistKind::Beta,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PolicyDist::Gaussian(p) => p.dim(),
            PolicyDist::Beta(p) => p.dim(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), DistError> {
        if x.len() != self.dim() {
            return Err(DistError::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Joint log-density at a raw action. Beta components are clamped to
    /// `[BETA_CLAMP, 1 - BETA_CLAMP]`.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64, DistError> {
        self.check_dim(x)?;
        Ok(match self {
            PolicyDist::Gaussian(p) => gaussian_log_prob(p, x),
            PolicyDist::Beta(p) => beta_log_prob(p, x),
        })
    }

    pub fn entropy(&self) -> f64 {
        match self {
            PolicyDist::Gaussian(p) => gaussian_entropy(p),
            PolicyDist::Beta(p) => beta_entropy(p),
        }
    }

    pub fn log_prob_grad(&self, x: &[f64]) -> Result<ParamGrad, DistError> {
        self.check_dim(x)?;
        let pairs: Vec<(f64, f64)> = match self {
            PolicyDist::Gaussian(p) => p
                .mu
                .iter()
                .zip(&p.sigma)
                .zip(x)
                .map(|((&m, &s), &x)| gaussian_log_prob_grad_1d(m, s, x))
                .collect(),
            PolicyDist::Beta(p) => p
                .alpha
                .iter()
                .zip(&p.beta)
                .zip(x)
                .map(|((&a, &b), &x)| beta_log_prob_grad_1d(a, b, x))
                .collect(),
        };
        let (first, second) = pairs.into_iter().unzip();
        Ok(ParamGrad { first, second })
    }

    /// Draws an action and maps it onto `bounds`.
    pub fn sample<R: Rng + ?Sized>(&self, bounds: &ActionBounds, rng: &mut R) -> ActionSample {
        match self {
            PolicyDist::Gaussian(p) => gaussian_sample(p, bounds, rng),
            PolicyDist::Beta(p) => beta_sample(p, bounds, rng),
        }
    }

    /// Raw deterministic action: `mu` for Gaussian, `alpha / (alpha + beta)`
    /// for Beta.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            PolicyDist::Gaussian(p) => p.mu.clone(),
            PolicyDist::Beta(p) => p.alpha.iter().zip(&p.beta).map(|(a, b)| a / (a + b)).collect(),
        }
    }

    /// The deterministic action mapped into the environment bounds.
    pub fn deterministic_action(&self, bounds: &ActionBounds) -> Vec<f64> {
        map_action(&self.mean(), bounds, self.kind())
    }
}

pub fn gaussian_log_prob(p: &GaussianParams, x: &[f64]) -> f64 {
    p.mu.iter().zip(&p.sigma).zip(x).map(|((&m, &s), &x)| gaussian_log_prob_1d(m, s, x)).sum()
}

pub fn beta_log_prob(p: &BetaParams, x: &[f64]) -> f64 {
    p.alpha.iter().zip(&p.beta).zip(x).map(|((&a, &b), &x)| beta_log_prob_1d(a, b, x)).sum()
}

pub fn gaussian_entropy(p: &GaussianParams) -> f64 {
    p.sigma.iter().map(|&s| gaussian_entropy_1d(s)).sum()
}

pub fn beta_entropy(p: &BetaParams) -> f64 {
    p.alpha.iter().zip(&p.beta).map(|(&a, &b)| beta_entropy_1d(a, b)).sum()
}

pub fn gaussian_sample<R: Rng + ?Sized>(p: &GaussianParams, bounds: &ActionBounds, rng: &mut R) -> ActionSample {
    let raw: Vec<f64> =
        p.mu.iter().zip(&p.sigma).map(|(&m, &s)| m + s * sample_standard_normal(rng)).collect();
    let log_prob = gaussian_log_prob(p, &raw);
    let env_action = map_action(&raw, bounds, DistKind::Gaussian);
    ActionSample { raw, log_prob, env_action }
}

pub fn beta_sample<R: Rng + ?Sized>(p: &BetaParams, bounds: &ActionBounds, rng: &mut R) -> ActionSample {
    let raw: Vec<f64> = p.alpha.iter().zip(&p.beta).map(|(&a, &b)| sample_beta_1d(a, b, rng)).collect();
    let log_prob = beta_log_prob(p, &raw);
    let env_action = map_action(&raw, bounds, DistKind::Beta);
    ActionSample { raw, log_prob, env_action }
}

/// Beta density on `[0, 1]`, zero outside the open interval.
pub(crate) fn beta_density_1d(alpha: f64, beta: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta_fn(alpha, beta)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_bounds(d: usize) -> ActionBounds {
        ActionBounds::new(vec![-1.0; d], vec![1.0; d]).unwrap()
    }

    fn gauss(mu: &[f64], sigma: &[f64]) -> GaussianParams {
        GaussianParams::new(mu.to_vec(), sigma.to_vec()).unwrap()
    }

    fn betap(a: &[f64], b: &[f64]) -> BetaParams {
        BetaParams::new(a.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_invalid_parameters() {
        assert!(GaussianParams::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianParams::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(BetaParams::new(vec![1.0], vec![2.0]).is_err());
        assert!(BetaParams::new(vec![2.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn gaussian_log_prob_examples() {
        assert!((gaussian_log_prob(&gauss(&[0.0], &[1.0]), &[0.0]) + 0.918_938_533_2).abs() < 1e-10);
        assert!((gaussian_log_prob(&gauss(&[0.0], &[1.0]), &[1.0]) + 1.418_938_533_2).abs() < 1e-10);
        let two = gauss(&[0.0, 0.0], &[1.0, 1.0]);
        assert!((gaussian_log_prob(&two, &[0.0, 0.0]) + 1.837_877_066_4).abs() < 1e-10);
    }

    #[test]
    fn beta_log_prob_examples() {
        let near_uniform = betap(&[1.000001], &[1.000001]);
        assert!(beta_log_prob(&near_uniform, &[0.3]).abs() < 1e-4);
        assert!((beta_log_prob(&betap(&[2.0], &[2.0]), &[0.5]) - 1.5f64.ln()).abs() < 1e-12);
        // 1/B(2,6) = 42, evaluated directly.
        let direct = (42.0 * 0.25 * 0.75f64.powi(5)).ln();
        assert!((direct - 0.912_964_894_904_573).abs() < 1e-12);
        assert!((beta_log_prob(&betap(&[2.0], &[6.0]), &[0.25]) - direct).abs() < 1e-12);
    }

    #[test]
    fn beta_log_prob_clamps_support_endpoints() {
        let p = betap(&[2.0], &[3.0]);
        let at_zero = beta_log_prob(&p, &[0.0]);
        assert!(at_zero.is_finite());
        assert_eq!(at_zero, beta_log_prob(&p, &[BETA_CLAMP]));
        assert_eq!(beta_log_prob(&p, &[1.0]), beta_log_prob(&p, &[1.0 - BETA_CLAMP]));
        let (ga, gb) = beta_log_prob_grad_1d(2.0, 3.0, 1.0);
        assert!(ga.is_finite() && gb.is_finite());
    }

    #[test]
    fn entropy_examples() {
        assert!((gaussian_entropy(&gauss(&[0.0], &[1.0])) - 1.418_938_533_2).abs() < 1e-10);
        let e = std::f64::consts::E;
        assert!((gaussian_entropy(&gauss(&[0.0], &[e])) - 2.418_938_533_2).abs() < 1e-10);
        assert!((gaussian_entropy(&gauss(&[0.0, 0.0], &[1.0, 1.0])) - 2.837_877_066_4).abs() < 1e-10);

        assert!(beta_entropy(&betap(&[1.000001], &[1.000001])).abs() < 1e-4);
        assert!((beta_entropy_1d(2.5, 7.0) - beta_entropy_1d(7.0, 2.5)).abs() < 1e-14);
    }

    #[test]
    fn beta_entropy_matches_quadrature() {
        for (a, b) in [(2.0, 2.0), (1.5, 4.0), (8.0, 3.0)] {
            let integrand = |x: f64| {
                let h = beta_density_1d(a, b, x);
                if h > 0.0 {
                    -h * h.ln()
                } else {
                    0.0
                }
            };
            let quad = simpson(integrand, 0.0, 1.0, 200_000);
            assert!((beta_entropy_1d(a, b) - quad).abs() < 1e-6, "({a},{b})");
        }
        // Frozen from an independent 30-digit quadrature of -∫h ln h.
        assert!((beta_entropy_1d(2.0, 2.0) + 0.125_092_802_561_388).abs() < 1e-6);
    }

    #[test]
    fn gaussian_normalizes() {
        for (mu, s) in [(0.0, 1.0), (2.5, 0.1), (-1.0, 3.0)] {
            let mass = simpson(|x| gaussian_log_prob_1d(mu, s, x).exp(), mu - 8.0 * s, mu + 8.0 * s, 20_000);
            assert!((mass - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn log_prob_grad_closed_forms() {
        let g = PolicyDist::Gaussian(gauss(&[0.0], &[1.0])).log_prob_grad(&[0.0]).unwrap();
        assert_eq!(g.first, vec![0.0]);
        assert_eq!(g.second, vec![-1.0]);
        let b = PolicyDist::Beta(betap(&[3.0], &[3.0])).log_prob_grad(&[0.5]).unwrap();
        assert!((b.first[0] - b.second[0]).abs() < 1e-15);
    }

    fn rel_close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + abs_floor
    }

    #[test]
    fn log_prob_grad_matches_central_differences() {
        let h = 1e-6;
        let (a, b, x) = (2.5, 4.0, 0.3);
        let (ga, gb) = beta_log_prob_grad_1d(a, b, x);
        let fa = (beta_log_prob_1d(a + h, b, x) - beta_log_prob_1d(a - h, b, x)) / (2.0 * h);
        let fb = (beta_log_prob_1d(a, b + h, x) - beta_log_prob_1d(a, b - h, x)) / (2.0 * h);
        assert!(rel_close(ga, fa, 1e-6, 1e-9));
        assert!(rel_close(gb, fb, 1e-6, 1e-9));

        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (1.2 + 1.7 * i as f64, 1.1 + 2.3 * j as f64);
                let x = 0.05 + 0.9 * ((i * 5 + j) as f64 / 24.0);
                let (ga, gb) = beta_log_prob_grad_1d(a, b, x);
                let h = 1e-5;
                let fa = (beta_log_prob_1d(a + h, b, x) - beta_log_prob_1d(a - h, b, x)) / (2.0 * h);
                let fb = (beta_log_prob_1d(a, b + h, x) - beta_log_prob_1d(a, b - h, x)) / (2.0 * h);
                assert!(rel_close(ga, fa, 1e-5, 1e-7), "alpha grad at ({a},{b},{x})");
                assert!(rel_close(gb, fb, 1e-5, 1e-7), "beta grad at ({a},{b},{x})");

                let (mu, s) = (-2.0 + i as f64, 0.3 + 0.4 * j as f64);
                let xg = mu + s * (j as f64 - 2.0) * 0.7 + 0.1;
                let (gm, gs) = gaussian_log_prob_grad_1d(mu, s, xg);
                let fm = (gaussian_log_prob_1d(mu + h, s, xg) - gaussian_log_prob_1d(mu - h, s, xg)) / (2.0 * h);
                let fs = (gaussian_log_prob_1d(mu, s + h, xg) - gaussian_log_prob_1d(mu, s - h, xg)) / (2.0 * h);
                assert!(rel_close(gm, fm, 1e-5, 1e-7));
                assert!(rel_close(gs, fs, 1e-5, 1e-7));
            }
        }
    }

    #[test]
    fn beta_entropy_grad_matches_central_differences() {
        let h = 1e-5;
        for (a, b) in [(1.3, 1.7), (2.0, 6.0), (9.0, 1.2)] {
            let (ga, gb) = beta_entropy_grad_1d(a, b);
            let fa = (beta_entropy_1d(a + h, b) - beta_entropy_1d(a - h, b)) / (2.0 * h);
            let fb = (beta_entropy_1d(a, b + h) - beta_entropy_1d(a, b - h)) / (2.0 * h);
            assert!(rel_close(ga, fa, 1e-5, 1e-8), "({a},{b}) {ga} {fa}");
            assert!(rel_close(gb, fb, 1e-5, 1e-8));
        }
    }

    #[test]
    fn deterministic_actions() {
        let b = PolicyDist::Beta(betap(&[3.0], &[1.5]));
        assert!((b.mean()[0] - 2.0 / 3.0).abs() < 1e-15);
        let sym = PolicyDist::Beta(betap(&[4.2], &[4.2]));
        assert_eq!(sym.mean(), vec![0.5]);
        let g = PolicyDist::Gaussian(gauss(&[1.7], &[0.3]));
        assert_eq!(g.deterministic_action(&unit_bounds(1)), vec![1.0]);
    }

    #[test]
    fn degenerate_gaussian_sample_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = gaussian_sample(&gauss(&[0.3], &[1e-12]), &unit_bounds(1), &mut rng);
        assert!((s.raw[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn gaussian_sample_clips_env_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = gauss(&[2.0], &[1.0]);
        for _ in 0..1000 {
            let s = gaussian_sample(&p, &unit_bounds(1), &mut rng);
            if s.raw[0] > 1.0 {
                assert_eq!(s.env_action[0], 1.0);
            }
            assert!((s.log_prob - gaussian_log_prob(&p, &s.raw)).abs() == 0.0);
        }
    }

    #[test]
    fn concentrated_beta_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_beta_1d(50.0, 50.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn beta_sample_mapped_into_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = betap(&[1.01, 30.0], &[1.01, 1.5]);
        let bounds = ActionBounds::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        for _ in 0..10_000 {
            let s = beta_sample(&p, &bounds, &mut rng);
            for (d, &r) in s.raw.iter().enumerate() {
                assert!((0.0..=1.0).contains(&r));
                assert!(s.env_action[d] >= bounds.low[d] && s.env_action[d] <= bounds.high[d]);
            }
        }
    }

    #[test]
    fn gamma_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in [1.0, 1.7, 6.0] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_gamma(shape, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            // Mean and variance of Gamma(k, 1) are both k.
            assert!((mean - shape).abs() < 5.0 * (shape / n as f64).sqrt());
            assert!((var - shape).abs() < 0.05 * shape);
        }
    }
}

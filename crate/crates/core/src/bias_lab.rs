//! Boundary bias of the score-function gradient estimator in a 1-D action
//! box `[-h, h]`.
//!
//! For a fixed state the true gradient is `∫ π ∇log π q(a) da`. When
//! out-of-box samples are clipped the environment answers with
//! `q(clip(a))`, and the estimator's expectation moves by
//!
//! ```text
//! ∫_{-∞}^{-h} π ∇log π [q(-h) - q(a)] da + ∫_{h}^{∞} π ∇log π [q(h) - q(a)] da
//! ```
//!
//! Gradients are taken with respect to `(mu, sigma)` for a Gaussian and
//! `(alpha, beta)` for a Beta distribution stretched over the box.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::distributions::{beta_density_1d, sample_beta_1d, sample_standard_normal, PolicyDist};
use crate::quadrature::{integrate_piecewise, Quadrature};
use crate::special::psi;

/// Gaussian integration half-width in standard deviations.
pub const GAUSSIAN_SPAN: f64 = 8.0;
/// Absolute tolerance handed to each quadrature.
pub const QUAD_TOL: f64 = 1e-12;
/// Allowed gap between the two bias computations.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BiasError {
    #[error("action bound must be positive and finite, got {0}")]
    Bound(f64),
    #[error("bias problems are one-dimensional, got a {0}-dimensional distribution")]
    Dimension(usize),
    #[error("bias cross-check failed on component {component}: clipped - true = {direct}, boundary integrals = {boundary}")]
    CrossCheck { component: usize, direct: f64, boundary: f64 },
    #[error("Monte Carlo estimate needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown q function '{0}' (expected linear, quadratic or step)")]
    UnknownQ(String),
}

/// Shipped action-value functions on `[-h, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QFunction {
    /// `q(a) = a`
    Linear,
    /// `q(a) = -(a - h/2)^2`
    Quadratic,
    /// `q(a) = 1[a > 0]`
    Step,
}

impl QFunction {
    pub const ALL: [QFunction; 3] = [QFunction::Linear, QFunction::Quadratic, QFunction::Step];

    pub fn eval(self, a: f64, h: f64) -> f64 {
        match self {
            QFunction::Linear => a,
            QFunction::Quadratic => -(a - 0.5 * h).powi(2),
            QFunction::Step => f64::from(u8::from(a > 0.0)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QFunction::Linear => "linear",
            QFunction::Quadratic => "quadratic",
            QFunction::Step => "step",
        }
    }

    /// Points where the function is not smooth.
    fn kinks(self) -> &'static [f64] {
        match self {
            QFunction::Step => &[0.0],
            _ => &[],
        }
    }
}

impl fmt::Display for QFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QFunction {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(QFunction::Linear),
            "quadratic" => Ok(QFunction::Quadratic),
            "step" => Ok(QFunction::Step),
            other => Err(BiasError::UnknownQ(other.into())),
        }
    }
}

pub struct BiasProblem {
    h: f64,
    q: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
    dist: PolicyDist,
}

impl fmt::Debug for BiasProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BiasProblem").field("h", &self.h).field("dist", &self.dist).finish_non_exhaustive()
    }
}

impl BiasProblem {
    /// `breakpoints` lists points where `q` is not smooth.
    pub fn new(
        h: f64,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breakpoints: &[f64],
        dist: PolicyDist,
    ) -> Result<Self, BiasError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(BiasError::Bound(h));
        }
        if dist.dim() != 1 {
            return Err(BiasError::Dimension(dist.dim()));
        }
        Ok(Self { h, q: Box::new(q), breakpoints: breakpoints.to_vec(), dist })
    }

    pub fn with_q(h: f64, q: QFunction, dist: PolicyDist) -> Result<Self, BiasError> {
        Self::new(h, move |a| q.eval(a, h), q.kinks(), dist)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dist(&self) -> &PolicyDist {
        &self.dist
    }

    fn q(&self, a: f64) -> f64 {
        (self.q)(a)
    }

    fn clip(&self, a: f64) -> f64 {
        a.clamp(-self.h, self.h)
    }

    /// Integrates `pi(a) * score_k(a) * g(a)` for both parameters over the
    /// distribution's effective support intersected with `[lo, hi]`.
    fn integrate(&self, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> [Quadrature; 2] {
        let g = &g;
        match &self.dist {
            PolicyDist::Gaussian(p) => {
                let (mu, sigma) = (p.mu()[0], p.sigma()[0]);
                let a = lo.max(mu - GAUSSIAN_SPAN * sigma);
                let b = hi.min(mu + GAUSSIAN_SPAN * sigma);
                if a >= b {
                    return [Quadrature { value: 0.0, error_estimate: 0.0, converged: true }; 2];
                }
                let mut cuts = vec![-self.h, self.h, mu];
                cuts.extend(&self.breakpoints);
                let f = |k: usize| {
                    move |x: f64| {
                        let z = (x - mu) / sigma;
                        let dens = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                        let score = if k == 0 { z / sigma } else { (z * z - 1.0) / sigma };
                        dens * score * g(x)
                    }
                };
                [integrate_piecewise(&f(0), a, b, &cuts, QUAD_TOL), integrate_piecewise(&f(1), a, b, &cuts, QUAD_TOL)]
            }
            PolicyDist::Beta(p) => {
                let (alpha, beta) = (p.alpha()[0], p.beta()[0]);
                let h = self.h;
                // Work in x ∈ [0, 1] with a = -h + 2h x.
                let to_x = |a: f64| ((a + h) / (2.0 * h)).clamp(0.0, 1.0);
                let (a, b) = (to_x(lo), to_x(hi));
                if a >= b {
                    return [Quadrature { value: 0.0, error_estimate: 0.0, converged: true }; 2];
                }
                let common = psi(alpha + beta);
                let (pa, pb) = (psi(alpha), psi(beta));
                let mut cuts = vec![0.5];
                cuts.extend(self.breakpoints.iter().map(|&c| to_x(c)));
                let f = |k: usize| {
                    move |x: f64| {
                        let dens = beta_density_1d(alpha, beta, x);
                        if dens == 0.0 {
                            return 0.0;
                        }
                        let score = if k == 0 { x.ln() - pa + common } else { (-x).ln_1p() - pb + common };
                        dens * score * g(-h + 2.0 * h * x)
                    }
                };
                [integrate_piecewise(&f(0), a, b, &cuts, QUAD_TOL), integrate_piecewise(&f(1), a, b, &cuts, QUAD_TOL)]
            }
        }
    }

    /// Score of the policy density at an action, per parameter.
    fn score(&self, a: f64) -> [f64; 2] {
        match &self.dist {
            PolicyDist::Gaussian(p) => {
                let (mu, sigma) = (p.mu()[0], p.sigma()[0]);
                let z = (a - mu) / sigma;
                [z / sigma, (z * z - 1.0) / sigma]
            }
            PolicyDist::Beta(p) => {
                let (alpha, beta) = (p.alpha()[0], p.beta()[0]);
                let x = (a + self.h) / (2.0 * self.h);
                let common = psi(alpha + beta);
                [x.ln() - psi(alpha) + common, (-x).ln_1p() - psi(beta) + common]
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.dist {
            PolicyDist::Gaussian(p) => p.mu()[0] + p.sigma()[0] * sample_standard_normal(rng),
            PolicyDist::Beta(p) => -self.h + 2.0 * self.h * sample_beta_1d(p.alpha()[0], p.beta()[0], rng),
        }
    }
}

/// A gradient pair with the quadrature's error bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientQuadrature {
    pub value: [f64; 2],
    pub error_estimate: f64,
    pub converged: bool,
}

impl From<[Quadrature; 2]> for GradientQuadrature {
    fn from(q: [Quadrature; 2]) -> Self {
        Self {
            value: [q[0].value, q[1].value],
            error_estimate: q[0].error_estimate.max(q[1].error_estimate),
            converged: q[0].converged && q[1].converged,
        }
    }
}

pub fn true_gradient(prob: &BiasProblem) -> GradientQuadrature {
    prob.integrate(f64::NEG_INFINITY, f64::INFINITY, |a| prob.q(a)).into()
}

pub fn clipped_gradient_expectation(prob: &BiasProblem) -> GradientQuadrature {
    prob.integrate(f64::NEG_INFINITY, f64::INFINITY, |a| prob.q(prob.clip(a))).into()
}

/// The two boundary integrals evaluated directly.
pub fn boundary_integrals(prob: &BiasProblem) -> GradientQuadrature {
    let h = prob.h;
    let (ql, qh) = (prob.q(-h), prob.q(h));
    let lower = prob.integrate(f64::NEG_INFINITY, -h, |a| ql - prob.q(a));
    let upper = prob.integrate(h, f64::INFINITY, |a| qh - prob.q(a));
    GradientQuadrature {
        value: [lower[0].value + upper[0].value, lower[1].value + upper[1].value],
        error_estimate: [&lower, &upper].iter().flat_map(|q| q.iter()).map(|q| q.error_estimate).fold(0.0, f64::max),
        converged: lower.iter().chain(&upper).all(|q| q.converged),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub true_grad: [f64; 2],
    pub clipped_grad_expectation: [f64; 2],
    pub bias: [f64; 2],
    pub boundary_bias: [f64; 2],
    pub mc_estimate: Option<[f64; 2]>,
    pub mc_stderr: Option<[f64; 2]>,
    pub quadrature_error: f64,
    pub converged: bool,
}

/// Bias by quadrature, cross-checked against the boundary-integral form.
pub fn bias(prob: &BiasProblem) -> Result<BiasReport, BiasError> {
    let t = true_gradient(prob);
    let c = clipped_gradient_expectation(prob);
    let e = boundary_integrals(prob);
    let bias = [c.value[0] - t.value[0], c.value[1] - t.value[1]];
    for component in 0..2 {
        if (bias[component] - e.value[component]).abs() > CROSS_CHECK_TOL {
            return Err(BiasError::CrossCheck { component, direct: bias[component], boundary: e.value[component] });
        }
    }
    let converged = t.converged && c.converged && e.converged;
    if !converged {
        log::warn!("bias quadrature did not reach tolerance; error estimate {:e}", t.error_estimate.max(c.error_estimate));
    }
    Ok(BiasReport {
        true_grad: t.value,
        clipped_grad_expectation: c.value,
        bias,
        boundary_bias: e.value,
        mc_estimate: None,
        mc_stderr: None,
        quadrature_error: t.error_estimate.max(c.error_estimate).max(e.error_estimate),
        converged,
    })
}

/// Sample mean and standard error of `g' - true_gradient` over `n` draws.
pub fn mc_bias_estimate<R: Rng + ?Sized>(
    prob: &BiasProblem,
    n: usize,
    rng: &mut R,
) -> Result<([f64; 2], [f64; 2]), BiasError> {
    if n < 100 {
        return Err(BiasError::TooFewSamples(n));
    }
    let t = true_gradient(prob).value;
    let mut sum = [0.0; 2];
    let mut sum_sq = [0.0; 2];
    for _ in 0..n {
        let a = prob.sample(rng);
        let s = prob.score(a);
        let qv = prob.q(prob.clip(a));
        for k in 0..2 {
            let g = s[k] * qv - t[k];
            sum[k] += g;
            sum_sq[k] += g * g;
        }
    }
    let nf = n as f64;
    let mut mean = [0.0; 2];
    let mut se = [0.0; 2];
    for k in 0..2 {
        mean[k] = sum[k] / nf;
        let var = (sum_sq[k] - nf * mean[k] * mean[k]) / (nf - 1.0);
        se[k] = (var.max(0.0) / nf).sqrt();
    }
    Ok((mean, se))
}

/// Quadrature report with the Monte Carlo columns filled.
pub fn bias_with_mc<R: Rng + ?Sized>(prob: &BiasProblem, n: usize, rng: &mut R) -> Result<BiasReport, BiasError> {
    let mut report = bias(prob)?;
    let (m, s) = mc_bias_estimate(prob, n, rng)?;
    report.mc_estimate = Some(m);
    report.mc_stderr = Some(s);
    Ok(report)
}

/// Count of `n` sampled actions landing outside `[-h, h]`.
pub fn out_of_bounds_count<R: Rng + ?Sized>(prob: &BiasProblem, n: usize, rng: &mut R) -> usize {
    (0..n).filter(|_| prob.sample(rng).abs() > prob.h).count()
}

pub fn out_of_bounds_fraction<R: Rng + ?Sized>(prob: &BiasProblem, n: usize, rng: &mut R) -> f64 {
    if n == 0 {
        return 0.0;
    }
    out_of_bounds_count(prob, n, rng) as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BetaParams, GaussianParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss(mu: f64, sigma: f64) -> PolicyDist {
        PolicyDist::Gaussian(GaussianParams::new(vec![mu], vec![sigma]).unwrap())
    }

    fn beta(a: f64, b: f64) -> PolicyDist {
        PolicyDist::Beta(BetaParams::new(vec![a], vec![b]).unwrap())
    }

    #[test]
    fn constant_q_has_zero_gradient() {
        for d in [gauss(0.3, 0.7), gauss(2.0, 0.4), beta(1.5, 5.0), beta(2.0, 2.0)] {
            let p = BiasProblem::new(1.0, |_| 3.0, &[], d).unwrap();
            let g = true_gradient(&p).value;
            assert!(g[0].abs() < 1e-8 && g[1].abs() < 1e-8, "{g:?}");
        }
    }

    #[test]
    fn stein_identity() {
        let p = BiasProblem::with_q(1.0, QFunction::Linear, gauss(0.0, 1.0)).unwrap();
        let g = true_gradient(&p).value;
        assert!((g[0] - 1.0).abs() < 1e-9);
        assert!(g[1].abs() < 1e-9);
    }

    #[test]
    fn symmetric_beta_gradients_are_antisymmetric() {
        let p = BiasProblem::with_q(1.0, QFunction::Linear, beta(2.0, 2.0)).unwrap();
        let g = true_gradient(&p).value;
        assert!(g[0] > 0.0);
        assert!((g[0] + g[1]).abs() < 1e-10);
    }

    #[test]
    fn narrow_interior_gaussian_has_no_bias() {
        let r = bias(&BiasProblem::with_q(1.0, QFunction::Linear, gauss(0.0, 0.01)).unwrap()).unwrap();
        assert!(r.bias[0].abs() < 1e-10 && r.bias[1].abs() < 1e-10);
        let r = bias(&BiasProblem::with_q(1.0, QFunction::Quadratic, gauss(0.0, 0.05)).unwrap()).unwrap();
        assert!((r.clipped_grad_expectation[0] - r.true_grad[0]).abs() < 1e-8);
    }

    #[test]
    fn near_boundary_gaussian_is_biased() {
        let r = bias(&BiasProblem::with_q(1.0, QFunction::Linear, gauss(0.9, 0.5)).unwrap()).unwrap();
        assert!(r.bias[0].abs() > 0.1);
    }

    #[test]
    fn golden_gaussian_case() {
        // Closed forms for q(a) = a, mu = sigma = h = 1:
        // d/dmu: Phi(0) - Phi(-2) - 1, d/dsigma: phi(-2) - phi(0).
        let r = bias(&BiasProblem::with_q(1.0, QFunction::Linear, gauss(1.0, 1.0)).unwrap()).unwrap();
        assert!((r.bias[0] - -0.522750131948).abs() < 1e-9, "{:?}", r.bias);
        assert!((r.bias[1] - -0.344951313888).abs() < 1e-9, "{:?}", r.bias);
        assert!((r.true_grad[0] - 1.0).abs() < 1e-9 && r.true_grad[1].abs() < 1e-9);
    }

    #[test]
    fn mc_matches_quadrature_and_scales() {
        let p = BiasProblem::with_q(1.0, QFunction::Linear, gauss(0.9, 0.5)).unwrap();
        let r = bias(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (m, se) = mc_bias_estimate(&p, 200_000, &mut rng).unwrap();
        for k in 0..2 {
            assert!((m[k] - r.bias[k]).abs() < 3.0 * se[k], "{k}: {} vs {} (se {})", m[k], r.bias[k], se[k]);
        }
        let (_, small) = mc_bias_estimate(&p, 10_000, &mut rng).unwrap();
        let ratio = small[0] / se[0];
        assert!((3.0..6.0).contains(&ratio), "{ratio}");
        assert!(mc_bias_estimate(&p, 99, &mut rng).is_err());
    }

    #[test]
    fn problem_validation() {
        assert!(BiasProblem::with_q(0.0, QFunction::Linear, gauss(0.0, 1.0)).is_err());
        let d2 = PolicyDist::Gaussian(GaussianParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        assert!(matches!(BiasProblem::with_q(1.0, QFunction::Linear, d2), Err(BiasError::Dimension(2))));
        assert_eq!("step".parse::<QFunction>().unwrap(), QFunction::Step);
        assert!("cubic".parse::<QFunction>().is_err());
    }
}

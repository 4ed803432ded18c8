//! Limiting diffusion of the scaled headcount: parameters, two-piece
//! stationary densities, waiting probabilities, scaled queue length and an
//! Euler–Maruyama integrator.

use crate::config::Policy;
use crate::dist::RateMoments;
use crate::error::{HetqError, Result};
use crate::normal;
use crate::quad::{self, GaussHermite};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionParams {
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl DiffusionParams {
    pub fn new(beta: f64, sigma: f64, gamma: f64, nu: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(HetqError::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(HetqError::Domain(format!("gamma must be positive, got {gamma}")));
        }
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(HetqError::Domain(format!("nu must be >= 0, got {nu}")));
        }
        if !beta.is_finite() {
            return Err(HetqError::Domain("beta must be finite".into()));
        }
        Ok(DiffusionParams { sigma, beta, gamma, nu })
    }
}

/// σ = √(λ̄·C² + μ̄) where λ̄ = λʳ/r.
pub fn sigma_from(lambda_per_r: f64, arrival_scv: f64, mu_bar: f64) -> f64 {
    (lambda_per_r * arrival_scv + mu_bar).sqrt()
}

/// Idleness coefficient for a routing policy. Random routing leaves the same
/// idle-mass profile as LISF, so it shares LISF's coefficient.
pub fn gamma_for(policy: Policy, moments: &RateMoments) -> f64 {
    match policy {
        Policy::Lisf | Policy::Random => moments.gamma_lisf,
        Policy::Fsf => moments.gamma_fsf,
    }
}

/// 1/(1 + e^{ln_k}) without overflow.
fn inv_one_plus_exp(ln_k: f64) -> f64 {
    if ln_k > 0.0 {
        let e = (-ln_k).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + ln_k.exp())
    }
}

/// ln of the odds (1 − ϱ)/ϱ without abandonment.
fn ln_odds_no_aband(beta: f64, sigma: f64, gamma: f64) -> f64 {
    let a = -SQRT_2 * beta / (gamma.sqrt() * sigma);
    a.ln() + normal::ln_mills(a)
}

/// ln of the odds (1 − ϱ)/ϱ with abandonment rate ν.
fn ln_odds_aband(beta: f64, sigma: f64, gamma: f64, nu: f64) -> f64 {
    let b_nu = SQRT_2 * beta / (nu.sqrt() * sigma);
    let b_gamma = SQRT_2 * beta / (gamma.sqrt() * sigma);
    0.5 * (nu / gamma).ln() + normal::ln_mills(-b_gamma) - normal::ln_mills(b_nu)
}

/// P(ξ(∞) ≥ 0) without abandonment. Requires β < 0.
pub fn prob_wait_no_aband(beta: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if !(beta < 0.0) {
        return Err(HetqError::Domain(format!(
            "no stationary law without abandonment for drift beta = {beta} >= 0"
        )));
    }
    if !(sigma > 0.0 && gamma > 0.0) {
        return Err(HetqError::Domain("sigma and gamma must be positive".into()));
    }
    Ok(inv_one_plus_exp(ln_odds_no_aband(beta, sigma, gamma)))
}

/// P(ξ(∞) ≥ 0) with abandonment rate ν > 0; any drift.
pub fn prob_wait_aband(beta: f64, sigma: f64, gamma: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0 && gamma > 0.0 && sigma > 0.0) {
        return Err(HetqError::Domain("need nu > 0, gamma > 0, sigma > 0".into()));
    }
    Ok(inv_one_plus_exp(ln_odds_aband(beta, sigma, gamma, nu)))
}

/// Density of a normal N(mean, sd²) conditioned to one side of 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfLineNormal {
    pub mean: f64,
    pub sd: f64,
    /// True for support [0, ∞), false for (−∞, 0).
    pub positive: bool,
}

impl HalfLineNormal {
    pub fn pdf(&self, x: f64) -> f64 {
        if (x >= 0.0) != self.positive {
            return 0.0;
        }
        let z = (x - self.mean) / self.sd;
        let side = if self.positive { self.mean / self.sd } else { -self.mean / self.sd };
        (normal::ln_pdf(z) - self.sd.ln() - normal::ln_cdf(side)).exp()
    }

    /// One-sided limit of the density at 0.
    pub fn at_zero(&self) -> f64 {
        let z = -self.mean / self.sd;
        let side = if self.positive { self.mean / self.sd } else { -self.mean / self.sd };
        (normal::ln_pdf(z) - self.sd.ln() - normal::ln_cdf(side)).exp()
    }

    /// P(X ≤ x) under the conditioned law.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        let m = self.mean / self.sd;
        if self.positive {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - normal::sf(z) / normal::cdf(m)
            }
        } else if x >= 0.0 {
            1.0
        } else {
            normal::cdf(z) / normal::cdf(-m)
        }
    }

    /// E[X] under the conditioned law.
    pub fn mean_value(&self) -> f64 {
        let z = self.mean / self.sd;
        if self.positive {
            self.sd * normal::truncated_mean_factor(z)
        } else {
            -self.sd * normal::truncated_mean_factor(-z)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum UpperPiece {
    /// rate·e^{−rate·x} on [0, ∞).
    Exponential { rate: f64 },
    Normal(HalfLineNormal),
}

impl UpperPiece {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            UpperPiece::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            UpperPiece::Normal(h) => h.pdf(x),
        }
    }

    pub fn at_zero(&self) -> f64 {
        match self {
            UpperPiece::Exponential { rate } => *rate,
            UpperPiece::Normal(h) => h.at_zero(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            UpperPiece::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            UpperPiece::Normal(h) => h.cdf(x),
        }
    }

    pub fn mean_value(&self) -> f64 {
        match self {
            UpperPiece::Exponential { rate } => 1.0 / rate,
            UpperPiece::Normal(h) => h.mean_value(),
        }
    }
}

/// Stationary density of ξ(∞): weight ϱ on the upper piece, 1 − ϱ below 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyStateDensity {
    pub params: DiffusionParams,
    pub varrho: f64,
    /// 1 − ϱ, computed without cancellation.
    pub below: f64,
    pub upper: UpperPiece,
    pub lower: HalfLineNormal,
}

impl SteadyStateDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.varrho * self.upper.pdf(x)
        } else {
            self.below * self.lower.pdf(x)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.below * self.lower.cdf(x)
        } else {
            self.below + self.varrho * self.upper.cdf(x)
        }
    }

    pub fn left_limit_at_zero(&self) -> f64 {
        self.below * self.lower.at_zero()
    }

    pub fn right_limit_at_zero(&self) -> f64 {
        self.varrho * self.upper.at_zero()
    }

    /// |f(0⁻) − f(0⁺)| / f(0⁺).
    pub fn continuity_residual(&self) -> f64 {
        let r = self.right_limit_at_zero();
        (self.left_limit_at_zero() - r).abs() / r
    }

    /// (x, f(x)) on an even grid of `n` points over [lo, hi].
    pub fn grid(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, self.pdf(x))
            })
            .collect()
    }

    /// A plotting range holding essentially all of the mass.
    pub fn support_hint(&self) -> (f64, f64) {
        let lo = self.lower.mean.min(0.0) - 6.0 * self.lower.sd;
        let hi = match self.upper {
            UpperPiece::Exponential { rate } => 30.0 / rate,
            UpperPiece::Normal(h) => h.mean.max(0.0) + 6.0 * h.sd,
        };
        (lo, hi)
    }
}

fn lower_piece(p: &DiffusionParams) -> HalfLineNormal {
    HalfLineNormal {
        mean: p.beta / p.gamma,
        sd: p.sigma / (2.0 * p.gamma).sqrt(),
        positive: false,
    }
}

pub fn stationary_no_aband(params: &DiffusionParams) -> Result<SteadyStateDensity> {
    if params.nu != 0.0 {
        return Err(HetqError::Domain("stationary_no_aband needs nu = 0".into()));
    }
    let ln_k = {
        prob_wait_no_aband(params.beta, params.sigma, params.gamma)?;
        ln_odds_no_aband(params.beta, params.sigma, params.gamma)
    };
    Ok(SteadyStateDensity {
        params: *params,
        varrho: inv_one_plus_exp(ln_k),
        below: inv_one_plus_exp(-ln_k),
        upper: UpperPiece::Exponential {
            rate: -2.0 * params.beta / (params.sigma * params.sigma),
        },
        lower: lower_piece(params),
    })
}

pub fn stationary_aband(params: &DiffusionParams) -> Result<SteadyStateDensity> {
    if !(params.nu > 0.0) {
        return Err(HetqError::Domain("stationary_aband needs nu > 0".into()));
    }
    let ln_k = ln_odds_aband(params.beta, params.sigma, params.gamma, params.nu);
    Ok(SteadyStateDensity {
        params: *params,
        varrho: inv_one_plus_exp(ln_k),
        below: inv_one_plus_exp(-ln_k),
        upper: UpperPiece::Normal(HalfLineNormal {
            mean: params.beta / params.nu,
            sd: params.sigma / (2.0 * params.nu).sqrt(),
            positive: true,
        }),
        lower: lower_piece(params),
    })
}

/// Stationary density for whichever model `params.nu` selects.
pub fn stationary(params: &DiffusionParams) -> Result<SteadyStateDensity> {
    if params.nu > 0.0 {
        stationary_aband(params)
    } else {
        stationary_no_aband(params)
    }
}

/// E[ξ(∞)⁺] = ϱ·E[ξ(∞) | ξ(∞) ≥ 0].
pub fn expected_positive_part(params: &DiffusionParams) -> Result<f64> {
    let d = stationary(params)?;
    Ok(d.varrho * d.upper.mean_value())
}

/// Routing variants for the QL(ε) sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QlPolicy {
    Lisf,
    Fsf,
}

/// Expected scaled queue length when rates are uniform on [μ̄ − ε, μ̄ + ε]:
/// E over β ~ N(−θμ̄, ε²/3) of the stationary E[ξ⁺].
pub fn ql_eps(eps: f64, mu_bar: f64, sigma: f64, theta: f64, nu: f64, policy: QlPolicy) -> Result<f64> {
    if !(eps > 0.0 && eps < mu_bar) {
        return Err(HetqError::Domain(format!("need 0 < eps < mu_bar, got eps = {eps}, mu_bar = {mu_bar}")));
    }
    if !(nu > 0.0) {
        return Err(HetqError::Domain("ql_eps needs nu > 0".into()));
    }
    if !(theta > 0.0) {
        return Err(HetqError::Domain("ql_eps needs theta > 0".into()));
    }
    let gamma = match policy {
        QlPolicy::Lisf => mu_bar + eps * eps / (3.0 * mu_bar),
        QlPolicy::Fsf => mu_bar - eps,
    };
    let mean = -theta * mu_bar;
    let sd = eps / 3f64.sqrt();
    expect_over_normal_beta(mean, sd, |b| expected_positive_part(&DiffusionParams::new(b, sigma, gamma, nu)?))
}

/// E[f(β)] for β ~ N(mean, sd²): Gauss–Hermite at 64 and 128 nodes, falling
/// back to adaptive quadrature over mean ± 8·sd when the two disagree.
pub fn expect_over_normal_beta<F>(mean: f64, sd: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if sd == 0.0 {
        return f(mean);
    }
    let rule = |n: usize| -> Result<f64> {
        let gh = GaussHermite::new(n);
        let mut err = None;
        let v = gh.expect(mean, sd, |b| match f(b) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let coarse = rule(64)?;
    let fine = rule(128)?;
    if (coarse - fine).abs() <= 1e-6 * fine.abs().max(1e-300) {
        return Ok(fine);
    }
    let mut err = None;
    let v = quad::integrate(
        |b| match f(b) {
            Ok(v) => v * normal::pdf((b - mean) / sd) / sd,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        mean - 8.0 * sd,
        mean + 8.0 * sd,
        0.0,
        1e-10,
    )
    .value;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Sampled Euler–Maruyama path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdePath {
    pub step: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Integrate dξ = (β + γξ⁻ − νξ⁺)dt + σ dW from `x0`, keeping every
/// `record_every`-th state (the initial state is always kept).
pub fn simulate_sde<R: Rng + ?Sized>(
    params: &DiffusionParams,
    x0: f64,
    horizon: f64,
    step: f64,
    record_every: usize,
    rng: &mut R,
) -> Result<SdePath> {
    if !(step > 0.0) {
        return Err(HetqError::Domain("SDE step must be positive".into()));
    }
    let steps = (horizon / step).round() as usize;
    let every = record_every.max(1);
    let mut times = Vec::with_capacity(steps / every + 1);
    let mut values = Vec::with_capacity(steps / every + 1);
    let sq = step.sqrt();
    let mut x = x0;
    times.push(0.0);
    values.push(x);
    for i in 1..=steps {
        let drift = params.beta + params.gamma * (-x).max(0.0) - params.nu * x.max(0.0);
        let noise = if params.sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            params.sigma * sq * z
        } else {
            0.0
        };
        x += drift * step + noise;
        if i % every == 0 {
            times.push(i as f64 * step);
            values.push(x);
        }
    }
    Ok(SdePath { step, times, values })
}

/// Total-variation distance between the empirical law of `samples` and a
/// stationary density over the bins given by `edges`, with the two
/// unbounded tails lumped into extra end bins.
pub fn histogram_tv(samples: &[f64], density: &SteadyStateDensity, edges: &[f64]) -> f64 {
    let k = edges.len() - 1;
    let mut counts = vec![0usize; k + 2];
    for &x in samples {
        let idx = edges.partition_point(|&e| e <= x);
        counts[idx] += 1;
    }
    let mut theory = Vec::with_capacity(k + 2);
    theory.push(density.cdf(edges[0]));
    for w in edges.windows(2) {
        theory.push(density.cdf(w[1]) - density.cdf(w[0]));
    }
    theory.push(1.0 - density.cdf(edges[k]));
    let n = samples.len() as f64;
    0.5 * counts
        .iter()
        .zip(&theory)
        .map(|(&c, &p)| (c as f64 / n - p).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfin_whitt_at_theta_one() {
        let p = prob_wait_no_aband(-1.0, 2f64.sqrt(), 1.0).unwrap();
        let hw = 1.0 / (1.0 + normal::cdf(1.0) / normal::pdf(1.0));
        assert!((p - hw).abs() < 1e-14);
        assert!((p - 0.223_36).abs() < 1e-4);
    }

    #[test]
    fn domain_errors() {
        assert!(prob_wait_no_aband(0.0, 1.0, 1.0).is_err());
        assert!(expected_positive_part(&DiffusionParams::new(0.5, 1.0, 1.0, 0.0).unwrap()).is_err());
        assert!(ql_eps(1.0, 1.0, 4.0, 2.0, 2.0, QlPolicy::Fsf).is_err());
    }

    #[test]
    fn collapse_example() {
        let v = prob_wait_aband(-2.0, 4.0, 2.0, 2.0).unwrap();
        assert!((v - normal::cdf(-0.5)).abs() < 1e-14);
        assert!((prob_wait_aband(0.0, 3.0, 1.5, 1.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_mean_case() {
        let p = DiffusionParams::new(-1.0, 2f64.sqrt(), 1.0, 0.0).unwrap();
        let rho = prob_wait_no_aband(-1.0, 2f64.sqrt(), 1.0).unwrap();
        assert!((expected_positive_part(&p).unwrap() - rho).abs() < 1e-15);
    }

    #[test]
    fn deterministic_ode_reduction() {
        let p = DiffusionParams { sigma: 0.0, beta: -1.0, gamma: 1.0, nu: 0.0 };
        let mut rng = crate::rng::stream(1, 0, crate::rng::Purpose::Sde);
        let path = simulate_sde(&p, 1.0, 1.0, 1e-4, 1, &mut rng).unwrap();
        assert!(path.values.last().unwrap().abs() < 1e-9);
    }
}

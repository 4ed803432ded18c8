//! Staffing costs over the safety coefficient x, exact Erlang-C and
//! Erlang-A (M/M/N+M) formulas, and a one-dimensional optimizer.

use crate::config::SystemConfig;
use crate::diffusion::{self, expect_over_normal_beta, DiffusionParams};
use crate::error::{HetqError, Result};
use crate::normal;
use crate::quad::{self, GaussLegendre};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErlangC {
    pub p_wait: f64,
    pub mean_q: f64,
    pub mean_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErlangA {
    pub p_wait: f64,
    pub mean_q: f64,
    pub abandon_prob: f64,
}

/// Erlang-B blocking probability by the stable recursion.
pub fn erlang_b(n: usize, offered: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=n {
        b = offered * b / (k as f64 + offered * b);
    }
    b
}

pub fn erlang_c(n: usize, lambda: f64, mu: f64) -> Result<ErlangC> {
    if n == 0 || !(mu > 0.0) || !(lambda >= 0.0) {
        return Err(HetqError::Domain("erlang_c needs n >= 1, mu > 0, lambda >= 0".into()));
    }
    let nf = n as f64;
    if lambda >= nf * mu {
        return Err(HetqError::Unstable(format!("lambda = {lambda} >= N mu = {}", nf * mu)));
    }
    let a = lambda / mu;
    let b = erlang_b(n, a);
    let c = nf * b / (nf - a * (1.0 - b));
    let rho = a / nf;
    Ok(ErlangC {
        p_wait: c,
        mean_q: c * rho / (1.0 - rho),
        mean_w: c / (nf * mu - lambda),
    })
}

pub fn erlang_a(n: usize, lambda: f64, mu: f64, nu: f64) -> Result<ErlangA> {
    if n == 0 || !(mu > 0.0) || !(nu > 0.0) || !(lambda >= 0.0) {
        return Err(HetqError::Domain("erlang_a needs n >= 1 and positive mu, nu".into()));
    }
    if lambda == 0.0 {
        return Ok(ErlangA { p_wait: 0.0, mean_q: 0.0, abandon_prob: 0.0 });
    }
    let b = erlang_b(n, lambda / mu);
    let nmu = n as f64 * mu;
    // Terms π_{N+k}/π_N and their queue-weighted sum.
    let mut term = 1.0;
    let mut upper = 1.0;
    let mut weighted = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= lambda / (nmu + k as f64 * nu);
        upper += term;
        weighted += k as f64 * term;
        if term < 1e-300 || (k as f64 * term <= 1e-18 * weighted && term <= 1e-18 * upper) {
            break;
        }
    }
    // Σ_{j≤N} π_j / π_N = 1/B.
    let total = 1.0 / b + upper - 1.0;
    let mean_q = weighted / total;
    Ok(ErlangA {
        p_wait: upper / total,
        mean_q,
        abandon_prob: nu * mean_q / lambda,
    })
}

/// Delay cost D(t) charged for a wait of length t.
#[derive(Clone)]
pub enum DelayCost {
    /// c·t.
    Linear { c: f64 },
    /// c·t^k.
    Power { c: f64, k: f64 },
    /// c·(1 − e^{−t/τ}); bounded by c.
    Saturating { c: f64, tau: f64 },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, bounded: bool },
}

impl fmt::Debug for DelayCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayCost::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            DelayCost::Power { c, k } => write!(f, "Power {{ c: {c}, k: {k} }}"),
            DelayCost::Saturating { c, tau } => write!(f, "Saturating {{ c: {c}, tau: {tau} }}"),
            DelayCost::Custom { bounded, .. } => write!(f, "Custom {{ bounded: {bounded} }}"),
        }
    }
}

impl DelayCost {
    pub fn is_zero(&self) -> bool {
        match self {
            DelayCost::Linear { c } | DelayCost::Power { c, .. } | DelayCost::Saturating { c, .. } => *c == 0.0,
            DelayCost::Custom { .. } => false,
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            DelayCost::Saturating { .. } => true,
            DelayCost::Custom { bounded, .. } => *bounded,
            _ => self.is_zero(),
        }
    }
}

/// G = (H − λ)∫₀^∞ D(t) e^{−(H−λ)t} dt, the mean cost of an exponential wait.
pub fn waiting_cost_g(h: f64, lambda: f64, d: &DelayCost) -> Result<f64> {
    let delta = h - lambda;
    if !(delta > 0.0) {
        return Err(HetqError::Domain(format!("need H > lambda, got H = {h}, lambda = {lambda}")));
    }
    Ok(match d {
        DelayCost::Linear { c } => c / delta,
        DelayCost::Power { c, k } => {
            if *c == 0.0 {
                0.0
            } else {
                c * libm::tgamma(k + 1.0) / delta.powf(*k)
            }
        }
        DelayCost::Saturating { c, tau } => c / (1.0 + delta * tau),
        DelayCost::Custom { f, .. } => quad::integrate_upper(|u| f(u / delta) * (-u).exp(), 0.0, 1e-14, 1e-12).value,
    })
}

/// Staffing cost F as a function of a (continuous) server count.
#[derive(Clone)]
pub enum StaffingCost {
    /// c_s per server.
    Linear { c_s: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for StaffingCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaffingCost::Linear { c_s } => write!(f, "Linear {{ c_s: {c_s} }}"),
            StaffingCost::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostSpec {
    pub staffing: StaffingCost,
    pub waiting: DelayCost,
    /// Cost d per abandonment.
    pub abandon_cost: f64,
    /// Fixed penalty for an unstable system, reported as C_un·P(β ≥ 0).
    pub unstable_cost: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            staffing: StaffingCost::Linear { c_s: 1.0 },
            waiting: DelayCost::Linear { c: 1.0 },
            abandon_cost: 1.0,
            unstable_cost: 0.0,
        }
    }
}

/// Everything the cost functionals need from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostContext {
    pub lambda: f64,
    pub r: f64,
    pub mu_bar: f64,
    pub var_zeta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl CostContext {
    pub fn from_config(config: &SystemConfig) -> Self {
        let m = config.rates.moments();
        CostContext {
            lambda: config.lambda,
            r: config.r,
            mu_bar: m.mean,
            var_zeta: m.variance,
            sigma: diffusion::sigma_from(config.lambda / config.r, config.arrival_scv, m.mean),
            gamma: diffusion::gamma_for(config.policy, &m),
            nu: config.nu,
        }
    }

    /// λʳ/μ̄, the offered load in servers.
    pub fn load(&self) -> f64 {
        self.lambda / self.mu_bar
    }

    /// N(x) = λ/μ̄ + x√(λ/μ̄), unrounded.
    pub fn servers_at(&self, x: f64) -> f64 {
        self.load() + x * self.load().sqrt()
    }

    /// F^r(x) = F(N(x)) − F(λ/μ̄).
    pub fn staffing_cost(&self, x: f64, f: &StaffingCost) -> f64 {
        match f {
            StaffingCost::Linear { c_s } => c_s * x * self.load().sqrt(),
            StaffingCost::Custom(g) => g(self.servers_at(x)) - g(self.load()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub x: f64,
    pub staffing: f64,
    pub variable: f64,
    /// C_un·P(β ≥ 0); not included in `total`.
    pub unstable_penalty: f64,
    pub p_stable: f64,
    pub total: f64,
}

/// Default Gauss–Legendre order for the conditional-on-stable β integral.
pub const NO_ABAND_NODES: usize = 128;

/// Ĉ(x) = F(x) + λ·E[P(β)·G(β) | β < 0] with β ~ N(−xμ̄, Var ζ).
pub fn cost_no_aband(x: f64, ctx: &CostContext, cost: &CostSpec) -> Result<CostBreakdown> {
    cost_no_aband_nodes(x, ctx, cost, NO_ABAND_NODES)
}

pub fn cost_no_aband_nodes(x: f64, ctx: &CostContext, cost: &CostSpec, nodes: usize) -> Result<CostBreakdown> {
    if !(x > 0.0) {
        return Err(HetqError::Domain(format!("safety coefficient must be positive, got {x}")));
    }
    let staffing = ctx.staffing_cost(x, &cost.staffing);
    let mean = -x * ctx.mu_bar;
    let sd = ctx.var_zeta.sqrt();
    let integrand = |b: f64| -> Result<f64> {
        let p = diffusion::prob_wait_no_aband(b, ctx.sigma, ctx.gamma)?;
        let g = waiting_cost_g(ctx.lambda - b * ctx.r.sqrt(), ctx.lambda, &cost.waiting)?;
        Ok(p * g)
    };
    let (variable, p_stable) = if cost.waiting.is_zero() {
        (0.0, if sd == 0.0 { 1.0 } else { normal::cdf(-mean / sd) })
    } else if sd == 0.0 {
        (ctx.lambda * integrand(mean)?, 1.0)
    } else {
        let p_stable = normal::cdf(-mean / sd);
        if p_stable < 1e-12 {
            return Err(HetqError::Degenerate(format!(
                "P(beta < 0) = {p_stable:e} at x = {x}: essentially every rate draw is unstable"
            )));
        }
        if !cost.waiting.is_bounded() {
            return Err(HetqError::Domain(
                "expected delay cost diverges: an unbounded delay cost has G ~ 1/|beta| near beta = 0 \
                 and the beta law has positive density there; use a bounded delay cost or point rates"
                    .into(),
            ));
        }
        let lo = mean - 8.0 * sd;
        let gl = GaussLegendre::new(nodes);
        let mut err = None;
        let integral = gl.integrate(lo, 0.0, |b| match integrand(b) {
            Ok(v) => v * normal::pdf((b - mean) / sd) / sd,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        (ctx.lambda * integral / p_stable, p_stable)
    };
    Ok(CostBreakdown {
        x,
        staffing,
        variable,
        unstable_penalty: cost.unstable_cost * (1.0 - p_stable),
        p_stable,
        total: staffing + variable,
    })
}

/// Ĉ(x) = F(x) + d·ν·√r·E_β[E ξ(∞)⁺] with β ~ N(−xμ̄, Var ζ).
pub fn cost_aband(x: f64, ctx: &CostContext, cost: &CostSpec) -> Result<CostBreakdown> {
    if !(x > 0.0) {
        return Err(HetqError::Domain(format!("safety coefficient must be positive, got {x}")));
    }
    if !(ctx.nu > 0.0) {
        return Err(HetqError::Domain("cost_aband needs nu > 0".into()));
    }
    let staffing = ctx.staffing_cost(x, &cost.staffing);
    let mean = -x * ctx.mu_bar;
    let sd = ctx.var_zeta.sqrt();
    let variable = if cost.abandon_cost == 0.0 {
        0.0
    } else {
        let eq = expect_over_normal_beta(mean, sd, |b| {
            diffusion::expected_positive_part(&DiffusionParams::new(b, ctx.sigma, ctx.gamma, ctx.nu)?)
        })?;
        cost.abandon_cost * ctx.nu * ctx.r.sqrt() * eq
    };
    let p_stable = if sd == 0.0 { 1.0 } else { normal::cdf(-mean / sd) };
    Ok(CostBreakdown {
        x,
        staffing,
        variable,
        unstable_penalty: cost.unstable_cost * (1.0 - p_stable),
        p_stable,
        total: staffing + variable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub x_star: f64,
    pub cost_at_optimum: f64,
    pub cost_curve: Vec<(f64, f64)>,
    pub bracket: (f64, f64),
    pub tol: f64,
    /// False when the sampled curve had an interior local maximum.
    pub unimodal: bool,
    pub evaluations: usize,
}

pub const DEFAULT_BRACKET: (f64, f64) = (0.05, 6.0);
pub const CURVE_POINTS: usize = 64;

fn golden<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64, evals: &mut usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    *evals += 2;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            *evals += 1;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            *evals += 1;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Minimize `cost_fn` over the bracket: golden-section search when the
/// 64-point curve is unimodal, grid-then-refine otherwise.
pub fn optimize_staffing<F>(cost_fn: F, bracket: (f64, f64), tol: f64) -> Result<OptimizationResult>
where
    F: Fn(f64) -> Result<f64>,
{
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi && tol > 0.0) {
        return Err(HetqError::Bracket(format!("invalid bracket ({lo}, {hi}) or tol {tol}")));
    }
    let eval = |x: f64| match cost_fn(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    };
    let mut evaluations = 0;
    let curve: Vec<(f64, f64)> = (0..CURVE_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            (x, eval(x))
        })
        .collect();
    evaluations += CURVE_POINTS;
    if curve.iter().all(|p| !p.1.is_finite()) {
        return Err(HetqError::Bracket("cost evaluation failed across the whole bracket".into()));
    }
    if !curve[0].1.is_finite() || !curve[CURVE_POINTS - 1].1.is_finite() {
        return Err(HetqError::Bracket(format!("cost is not finite at a bracket end ({lo}, {hi})")));
    }
    let unimodal = !curve.windows(3).any(|w| {
        let slack = 1e-12 * w[1].1.abs();
        w[1].1 > w[0].1 + slack && w[1].1 > w[2].1 + slack
    });
    let (grid_i, _) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, p)| (i, p.1))
        .expect("curve is nonempty");
    let local = |i: usize| (curve[i.saturating_sub(1)].0, curve[(i + 1).min(CURVE_POINTS - 1)].0);
    let (a, b) = if unimodal { (lo, hi) } else { local(grid_i) };
    let mut best = golden(&eval, a, b, tol, &mut evaluations);
    if curve[grid_i].1 < best.1 {
        let (a, b) = local(grid_i);
        let refined = golden(&eval, a, b, tol, &mut evaluations);
        best = if refined.1 < curve[grid_i].1 { refined } else { curve[grid_i] };
    }
    Ok(OptimizationResult {
        x_star: best.0,
        cost_at_optimum: best.1,
        cost_curve: curve,
        bracket,
        tol,
        unimodal,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erlang_c_small_cases() {
        let c = erlang_c(1, 0.5, 1.0).unwrap();
        assert!((c.p_wait - 0.5).abs() < 1e-15);
        let c = erlang_c(2, 1.0, 1.0).unwrap();
        assert!((c.p_wait - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(erlang_c(2, 2.0, 1.0), Err(HetqError::Unstable(_))));
    }

    #[test]
    fn erlang_a_equal_rates_is_poisson() {
        // ν = μ: π_j ∝ a^j/j!, so P(X ≥ N) is a Poisson upper tail.
        let (n, a) = (5usize, 3.0f64);
        let e = erlang_a(n, a, 1.0, 1.0).unwrap();
        let mut pmf = vec![(-a).exp()];
        for j in 1..200 {
            let prev = pmf[j - 1];
            pmf.push(prev * a / j as f64);
        }
        let tail: f64 = pmf[n..].iter().sum();
        let mq: f64 = pmf.iter().enumerate().skip(n).map(|(j, p)| (j - n) as f64 * p).sum();
        assert!((e.p_wait - tail).abs() < 1e-14);
        assert!((e.mean_q - mq).abs() < 1e-14);
        let tiny = erlang_a(10, 1e-9, 1.0, 1.0).unwrap();
        assert!(tiny.p_wait < 1e-80 && tiny.abandon_prob < 1e-80);
    }

    #[test]
    fn g_examples() {
        assert_eq!(waiting_cost_g(3.0, 1.0, &DelayCost::Linear { c: 0.0 }).unwrap(), 0.0);
        assert!((waiting_cost_g(3.0, 1.0, &DelayCost::Linear { c: 3.0 }).unwrap() - 1.5).abs() < 1e-15);
        assert!((waiting_cost_g(2.0, 1.0, &DelayCost::Power { c: 1.0, k: 2.0 }).unwrap() - 2.0).abs() < 1e-12);
        let quad_custom = DelayCost::Custom { f: Arc::new(|t| t * t), bounded: false };
        assert!((waiting_cost_g(2.0, 1.0, &quad_custom).unwrap() - 2.0).abs() < 1e-10);
        assert!(waiting_cost_g(1.0, 1.0, &DelayCost::Linear { c: 1.0 }).is_err());
    }

    #[test]
    fn golden_on_quadratic() {
        let r = optimize_staffing(|x| Ok((x - 2.0) * (x - 2.0)), (0.1, 5.0), 1e-6).unwrap();
        assert!((r.x_star - 2.0).abs() < 1e-6);
        assert!(r.unimodal);
        assert!(r.cost_curve.iter().all(|p| r.cost_at_optimum <= p.1));
    }

    #[test]
    fn non_unimodal_is_flagged() {
        let f = |x: f64| Ok((3.0 * x).sin() + 0.1 * x);
        let r = optimize_staffing(f, (0.1, 5.0), 1e-7).unwrap();
        assert!(!r.unimodal);
        assert!(r.cost_curve.iter().all(|p| r.cost_at_optimum <= p.1));
        assert!(optimize_staffing(|_| Err(HetqError::Domain("x".into())), (0.1, 5.0), 1e-6).is_err());
    }
}

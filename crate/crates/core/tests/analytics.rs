use hetq::config::{KvConfig, SystemConfig};
use hetq::diffusion::{self, DiffusionParams, QlPolicy};
use hetq::rng::{stream, Purpose};
use hetq::sim::{run, steady_estimates};
use hetq::staffing::{self, CostContext, CostSpec, DelayCost, StaffingCost};
use hetq::{HetqError, RealizedSystem};

fn config(pairs: &[(&str, &str)]) -> SystemConfig {
    let mut kv = KvConfig::default();
    for (k, v) in pairs {
        kv.set(k, v);
    }
    SystemConfig::from_kv(&kv).unwrap()
}

fn waiting_only(d: DelayCost) -> CostSpec {
    CostSpec {
        staffing: StaffingCost::Linear { c_s: 1.0 },
        waiting: d,
        abandon_cost: 0.0,
        unstable_cost: 0.0,
    }
}

fn abandon_only(d: f64) -> CostSpec {
    CostSpec {
        staffing: StaffingCost::Linear { c_s: 1.0 },
        waiting: DelayCost::Linear { c: 0.0 },
        abandon_cost: d,
        unstable_cost: 0.0,
    }
}

#[test]
fn ql_collapses_to_point_rates_as_eps_vanishes() {
    let at_point = diffusion::expected_positive_part(&DiffusionParams::new(-2.0, 4.0, 1.0, 2.0).unwrap()).unwrap();
    for p in [QlPolicy::Lisf, QlPolicy::Fsf] {
        let v = diffusion::ql_eps(1e-7, 1.0, 4.0, 2.0, 2.0, p).unwrap();
        assert!((v - at_point).abs() < 1e-6 * at_point, "{p:?}: {v} vs {at_point}");
    }
}

#[test]
fn ql_trends() {
    let grid: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let lisf: Vec<f64> = grid.iter().map(|&e| diffusion::ql_eps(e, 1.0, 4.0, 2.0, 2.0, QlPolicy::Lisf).unwrap()).collect();
    let fsf: Vec<f64> = grid.iter().map(|&e| diffusion::ql_eps(e, 1.0, 4.0, 2.0, 2.0, QlPolicy::Fsf).unwrap()).collect();
    assert!(lisf.windows(2).all(|w| w[1] > w[0] + 1e-8), "{lisf:?}");
    assert!(fsf.windows(2).all(|w| w[1] < w[0] - 1e-8), "{fsf:?}");
}

#[test]
fn ql_rejects_eps_at_mu_bar() {
    assert!(matches!(diffusion::ql_eps(1.0, 1.0, 4.0, 2.0, 2.0, QlPolicy::Fsf), Err(HetqError::Domain(_))));
}

/// Histogram bins used against the stationary density: 0.2 wide on [−6, 6],
/// plus the two tails.
fn tv_edges() -> Vec<f64> {
    (0..=60).map(|i| -6.0 + 0.2 * i as f64).collect()
}

fn sde_tv(seed: u64) -> (f64, Vec<f64>) {
    let p = DiffusionParams::new(-1.0, 2.0, 1.0, 1.0).unwrap();
    let mut rng = stream(seed, 0, Purpose::Sde);
    let path = diffusion::simulate_sde(&p, 0.0, 1e4, 1e-3, 10, &mut rng).unwrap();
    let kept = &path.values[path.values.len() / 100..];
    let density = diffusion::stationary(&p).unwrap();
    (diffusion::histogram_tv(kept, &density, &tv_edges()), kept.to_vec())
}

#[test]
fn sde_histogram_matches_stationary_density() {
    let (tv_a, a) = sde_tv(1);
    let (tv_b, b) = sde_tv(2);
    assert!(tv_a < 0.02, "tv {tv_a}");
    assert!(tv_b < 0.02, "tv {tv_b}");
    assert_ne!(a[..100], b[..100]);
}

#[test]
fn sde_reproduces_for_a_seed() {
    let p = DiffusionParams::new(-1.0, 2.0, 1.0, 1.0).unwrap();
    let one = diffusion::simulate_sde(&p, 0.5, 10.0, 1e-3, 1, &mut stream(9, 3, Purpose::Sde)).unwrap();
    let two = diffusion::simulate_sde(&p, 0.5, 10.0, 1e-3, 1, &mut stream(9, 3, Purpose::Sde)).unwrap();
    assert_eq!(one, two);
}

#[test]
fn zero_waiting_cost_leaves_staffing_cost() {
    let c = config(&[("lambda", "100"), ("rates", "uniform(0.5,1.5)")]);
    let ctx = CostContext::from_config(&c);
    let cost = waiting_only(DelayCost::Linear { c: 0.0 });
    for x in [0.2, 1.0, 3.0] {
        let b = staffing::cost_no_aband(x, &ctx, &cost).unwrap();
        assert_eq!(b.variable, 0.0);
        assert!((b.total - x * 10.0).abs() < 1e-12);
    }
    let res = staffing::optimize_staffing(|x| Ok(staffing::cost_no_aband(x, &ctx, &cost)?.total), (0.1, 5.0), 1e-6).unwrap();
    assert!(res.x_star < 0.1 + 1e-5, "{}", res.x_star);
}

#[test]
fn point_rate_cost_is_unimodal() {
    let c = config(&[("lambda", "100")]);
    let ctx = CostContext::from_config(&c);
    let cost = waiting_only(DelayCost::Linear { c: 1.0 });
    let curve: Vec<f64> = (0..=490)
        .map(|i| staffing::cost_no_aband(0.1 + 0.01 * i as f64, &ctx, &cost).unwrap().total)
        .collect();
    let k = curve.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(curve[..=k].windows(2).all(|w| w[1] <= w[0]));
    assert!(curve[k..].windows(2).all(|w| w[1] >= w[0]));
    assert!(k > 0 && k < curve.len() - 1, "minimum at an end: {k}");
}

#[test]
fn beta_quadrature_self_converges() {
    let c = config(&[("lambda", "100"), ("rates", "uniform(0.5,1.5)")]);
    let ctx = CostContext::from_config(&c);
    let cost = waiting_only(DelayCost::Saturating { c: 2.0, tau: 1.0 });
    let a = staffing::cost_no_aband_nodes(1.0, &ctx, &cost, 64).unwrap().total;
    let b = staffing::cost_no_aband_nodes(1.0, &ctx, &cost, 128).unwrap().total;
    assert!((a - b).abs() < 1e-6 * b.abs(), "{a} vs {b}");
}

#[test]
fn unbounded_delay_cost_with_random_rates_is_a_domain_error() {
    let c = config(&[("lambda", "100"), ("rates", "uniform(0.5,1.5)")]);
    let ctx = CostContext::from_config(&c);
    let cost = waiting_only(DelayCost::Linear { c: 1.0 });
    assert!(matches!(staffing::cost_no_aband(1.0, &ctx, &cost), Err(HetqError::Domain(_))));
}

#[test]
fn abandonment_cost_is_linear_in_d() {
    let c = config(&[("lambda", "400"), ("rates", "uniform(0.8,1.2)"), ("nu", "1")]);
    let ctx = CostContext::from_config(&c);
    let zero = staffing::cost_aband(0.7, &ctx, &abandon_only(0.0)).unwrap();
    assert_eq!(zero.total, zero.staffing);
    let one = staffing::cost_aband(0.7, &ctx, &abandon_only(3.0)).unwrap();
    let two = staffing::cost_aband(0.7, &ctx, &abandon_only(6.0)).unwrap();
    assert!((two.variable - 2.0 * one.variable).abs() < 1e-12 * two.variable);
    // Evaluations are pure quadrature: repeated calls are bit-identical.
    assert_eq!(one, staffing::cost_aband(0.7, &ctx, &abandon_only(3.0)).unwrap());
}

#[test]
fn point_rate_abandonment_cost_uses_deterministic_beta() {
    let c = config(&[("lambda", "400"), ("nu", "1")]);
    let ctx = CostContext::from_config(&c);
    let x = 0.9;
    let b = staffing::cost_aband(x, &ctx, &abandon_only(5.0)).unwrap();
    let epp = diffusion::expected_positive_part(&DiffusionParams::new(-x, ctx.sigma, ctx.gamma, 1.0).unwrap()).unwrap();
    assert!((b.variable - 5.0 * 20.0 * epp).abs() < 1e-12 * b.variable);
}

#[test]
fn large_staffing_cost_pushes_optimum_to_lower_end() {
    let c = config(&[("lambda", "400"), ("rates", "uniform(0.8,1.2)"), ("nu", "1")]);
    let ctx = CostContext::from_config(&c);
    let mut cost = abandon_only(1.0);
    cost.staffing = StaffingCost::Linear { c_s: 1e3 };
    let res = staffing::optimize_staffing(|x| Ok(staffing::cost_aband(x, &ctx, &cost)?.total), (0.05, 6.0), 1e-6).unwrap();
    assert!(res.x_star < 0.05 + 1e-5, "{}", res.x_star);
}

#[test]
fn analytic_cost_matches_simulated_cost() {
    // Point rates, r = 400: simulated staffing plus abandonment cost at the
    // analytic optimum, rounded to whole servers, against Ĉ at that staffing.
    let c = config(&[("lambda", "400"), ("nu", "1")]);
    let ctx = CostContext::from_config(&c);
    let cost = abandon_only(5.0);
    let res = staffing::optimize_staffing(|x| Ok(staffing::cost_aband(x, &ctx, &cost)?.total), (0.05, 6.0), 1e-6).unwrap();
    let n = ctx.servers_at(res.x_star).round() as usize;
    let x_n = (n as f64 - 400.0) / 20.0;
    let analytic = staffing::cost_aband(x_n, &ctx, &cost).unwrap().total;
    let sim_config = config(&[
        ("lambda", "400"),
        ("nu", "1"),
        ("staffing", "fixed"),
        ("servers", &n.to_string()),
        ("horizon", "500"),
        ("warmup", "0.1"),
        ("seed", "44"),
    ]);
    let sys = RealizedSystem::realize(&sim_config, 0);
    let path = run(&sim_config, &sys, sim_config.abandonment).unwrap();
    let est = steady_estimates(&path, sim_config.warmup).unwrap();
    let simulated = (n as f64 - 400.0) + 5.0 * est.abandon_rate;
    assert!((simulated - analytic).abs() < 0.05 * analytic, "N = {n}: sim {simulated} vs analytic {analytic}");
}

#[test]
fn optimizer_finds_quadratic_minimum() {
    let res = staffing::optimize_staffing(|x| Ok((x - 2.0) * (x - 2.0)), (0.1, 5.0), 1e-8).unwrap();
    assert!((res.x_star - 2.0).abs() < 1e-6);
    assert!(res.unimodal);
    assert!(res.cost_curve.iter().all(|p| res.cost_at_optimum <= p.1));
}

#[test]
fn optimizer_rejects_failing_cost() {
    let r = staffing::optimize_staffing(|_| Err(HetqError::Domain("no".into())), (0.1, 5.0), 1e-6);
    assert!(matches!(r, Err(HetqError::Bracket(_))));
}

#[test]
fn quadratic_delay_cost() {
    let g = staffing::waiting_cost_g(11.0, 10.0, &DelayCost::Power { c: 1.0, k: 2.0 }).unwrap();
    assert!((g - 2.0).abs() < 1e-12);
}

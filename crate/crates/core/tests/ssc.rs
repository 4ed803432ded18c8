use hetq::config::{parse_pools, Policy, Pool, SystemConfig};
use hetq::sim::{run_with, PathRecord, RunOptions};
use hetq::ssc::{self, HydroScaledPath, Partition, SscFunctionSpec};
use hetq::{AbandonMode, HetqError, RealizedSystem};

fn traced(c: &SystemConfig) -> PathRecord {
    let sys = RealizedSystem::realize(c, 0);
    let mut o = RunOptions::from_config(c);
    o.record_trace = true;
    run_with(c, &sys, AbandonMode::None, &o).unwrap()
}

fn two_pool(r: f64, horizon: f64) -> SystemConfig {
    ssc::heavy_traffic_config(&parse_pools("0.5:1,0.5:2").unwrap(), r, 1.0, Policy::Lisf, horizon, 31).unwrap()
}

#[test]
fn g_examples() {
    let spec = SscFunctionSpec::new(vec![0.5, 0.5], vec![1.0, 2.0]).unwrap();
    assert!((spec.gamma_i - 5.0 / 3.0).abs() < 1e-15);
    assert!((ssc::ssc_g(&spec, 0.0, &[1.0, 1.0]) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(ssc::ssc_g(&spec, 3.0, &[0.0, 0.0]), 0.0);
    let single = SscFunctionSpec::new(vec![1.0], vec![1.7]).unwrap();
    assert_eq!(ssc::ssc_g(&single, 1.0, &[-4.2]), 0.0);
}

#[test]
fn equal_rate_pools_are_rejected() {
    assert!(matches!(SscFunctionSpec::new(vec![0.5, 0.5], vec![1.0, 1.0]), Err(HetqError::Config { .. })));
    assert!(parse_pools("0.5:1,0.5:1").and_then(|p| hetq::config::validate_pools(&p)).is_err());
}

#[test]
fn single_pool_ratio_is_zero() {
    let pools = [Pool { fraction: 1.0, rate: 1.0 }];
    let configs: Vec<_> = [25.0, 100.0]
        .iter()
        .map(|&r| ssc::heavy_traffic_config(&pools, r, 1.0, Policy::Lisf, 5.0, 3).unwrap())
        .collect();
    let table = ssc::ssc_convergence(&configs, 4).unwrap();
    assert!(table.rows.iter().all(|row| row.ratio == 0.0));
}

#[test]
fn mismatched_pools_are_a_config_error() {
    let a = two_pool(25.0, 5.0);
    let b = ssc::heavy_traffic_config(&parse_pools("0.5:1,0.5:3").unwrap(), 100.0, 1.0, Policy::Lisf, 5.0, 31).unwrap();
    assert!(matches!(ssc::ssc_convergence(&[a, b], 2), Err(HetqError::Config { .. })));
}

#[test]
fn heavy_traffic_config_sets_rho_near_one() {
    let c = two_pool(400.0, 1.0);
    // Per-server arrival rate λ/N; λ = capacity − θμ̄√r, so 1 − ρ* = θ/√r.
    let plan = ssc::static_planning_inverted_v(&[0.5, 0.5], &[1.0, 2.0], c.lambda / 400.0).unwrap();
    assert!((1.0 - plan.rho_star - 1.0 / 20.0).abs() < 1e-12);
    assert!(!plan.heavy_traffic);
}

#[test]
fn static_plan_examples() {
    let p = ssc::static_planning_inverted_v(&[0.5, 0.5], &[1.0, 2.0], 1.2).unwrap();
    assert!((p.rho_star - 0.8).abs() < 1e-15);
    assert_eq!(p.x_star, vec![p.rho_star; 2]);
    assert!(ssc::static_planning_inverted_v(&[0.5, 0.5], &[1.0, 2.0], 1.5).unwrap().heavy_traffic);
    assert_eq!(ssc::static_planning_inverted_v(&[0.5, 0.5], &[1.0, 2.0], 0.0).unwrap().rho_star, 0.0);
}

#[test]
fn hydro_scale_matches_hand_recompute() {
    let c = two_pool(100.0, 20.0);
    let path = traced(&c);
    let trace = path.trace.as_ref().unwrap();
    let h = ssc::hydro_scale(&path, 100.0, 3.0, 1.0, 10).unwrap();

    // Last recorded state at or before t, by linear scan.
    let state = |t: f64| {
        let mut i = 0;
        while i + 1 < trace.times.len() && trace.times[i + 1] <= t {
            i += 1;
        }
        (trace.q[i] as f64, [trace.z[2 * i] as f64, trace.z[2 * i + 1] as f64])
    };
    let n = path.n as f64;
    let sizes = [path.pool_sizes[0] as f64, path.pool_sizes[1] as f64];
    let start = 3.0 / n.sqrt();
    let (_, z0) = state(start);
    let dev = (z0[0] - sizes[0]).abs().max((z0[1] - sizes[1]).abs());
    let x_rm = (dev * dev).max(n);
    assert!((h.x_rm - x_rm).abs() <= 1e-12 * x_rm);
    assert!(h.x_rm >= n);
    for j in [0usize, 4, 10] {
        let t = start + x_rm.sqrt() * (j as f64 / 10.0) / n;
        let (q, z) = state(t);
        assert!((h.q[j] - q / x_rm.sqrt()).abs() < 1e-12);
        for i in 0..2 {
            assert!((h.z[j][i] - (z[i] - sizes[i]) / x_rm.sqrt()).abs() < 1e-12);
        }
    }
    assert!(h.z[0].iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn hydro_scale_of_a_saturated_path_is_zero() {
    let mut c = two_pool(100.0, 2.0);
    c.lambda *= 2.0;
    c.initial_x = Some(400);
    let path = traced(&c);
    let h = ssc::hydro_scale(&path, 100.0, 0.0, 1.0, 20).unwrap();
    assert_eq!(h.x_rm, path.n as f64);
    assert!(h.z.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn hydro_scale_needs_a_long_enough_path() {
    let c = two_pool(100.0, 0.05);
    let path = traced(&c);
    assert!(matches!(ssc::hydro_scale(&path, 100.0, 5.0, 1.0, 10), Err(HetqError::Window(_))));
}

#[test]
fn lipschitz_degenerate_cases() {
    let constant = HydroScaledPath {
        r: 1.0,
        m: 0.0,
        x_rm: 1.0,
        start: 0.0,
        times: (0..=10).map(|i| i as f64 / 10.0).collect(),
        q: vec![0.3; 11],
        z: vec![vec![0.1, -0.2]; 11],
    };
    assert_eq!(ssc::almost_lipschitz_check(&[constant.clone()], 1e-9, 0.0), 0.0);
    let mut moving = constant;
    moving.q[5] = 0.9;
    assert!(ssc::almost_lipschitz_check(&[moving], 0.0, 0.0) > 0.0);
}

#[test]
fn lipschitz_exceedance_is_rare_at_r_400() {
    let c = two_pool(400.0, 5.0);
    let path = traced(&c);
    let paths: Vec<_> = (0..20).map(|m| ssc::hydro_scale(&path, 400.0, m as f64, 1.0, 20).unwrap()).collect();
    let frac = ssc::almost_lipschitz_check(&paths, 4.0 * c.lambda, 0.1);
    assert!(frac < 0.05, "{frac}");
}

#[test]
fn ssc_ratio_decreases_over_scales() {
    let configs: Vec<_> = [25.0, 100.0, 400.0].iter().map(|&r| two_pool(r, 10.0)).collect();
    let table = ssc::ssc_convergence(&configs, 30).unwrap();
    assert_eq!(table.rows.len(), 90);
    let med: Vec<f64> = table.summary.iter().map(|s| s.median).collect();
    assert!(med.windows(2).all(|w| w[1] < w[0]), "{med:?}");
    for s in &table.summary {
        assert!(s.q1 <= s.median && s.median <= s.q3);
    }
}

#[test]
fn single_bin_fairness_is_one() {
    let mut c = two_pool(100.0, 20.0);
    c.rates = hetq::RateDistribution::uniform(0.5, 1.5).unwrap();
    c.pools = None;
    c.lambda = 90.0;
    let sys = RealizedSystem::realize(&c, 0);
    let path = run_with(&c, &sys, AbandonMode::None, &RunOptions::from_config(&c)).unwrap();
    let est = ssc::fairness_estimate(&path, &sys.mu, &Partition::equal_width(0.5, 1.5, 1), &c.rates, Policy::Lisf, 0).unwrap();
    assert_eq!(est.eta_hat, vec![1.0]);
    assert_eq!(est.eta_theory.len(), 1);
    assert!((est.eta_theory[0] - 1.0).abs() < 1e-12);
}

#[test]
fn lisf_theory_share_of_upper_half() {
    let d = hetq::RateDistribution::uniform(0.5, 1.5).unwrap();
    let p = Partition { edges: vec![0.5, 1.0, 1.5] };
    let eta = p.theory(&d, Policy::Lisf);
    assert!((eta[1] - 0.625).abs() < 1e-12);
    let fsf = Partition::for_distribution(&hetq::RateDistribution::parse("discrete(1:0.5,2:0.5)").unwrap(), 10);
    assert_eq!(fsf.bins(), 2);
}

#[test]
fn saturated_path_has_no_idleness() {
    let mut c = two_pool(100.0, 2.0);
    c.lambda *= 2.0;
    c.initial_x = Some(400);
    let sys = RealizedSystem::realize(&c, 0);
    let path = run_with(&c, &sys, AbandonMode::None, &RunOptions::from_config(&c)).unwrap();
    let p = Partition::for_distribution(&c.rates, 10);
    assert!(matches!(
        ssc::fairness_estimate(&path, &sys.mu, &p, &c.rates, Policy::Lisf, 0),
        Err(HetqError::NoIdleness)
    ));
}

use hetq::config::{halfin_whitt_servers, KvConfig, Policy, SystemConfig};
use hetq::diffusion::{self, DiffusionParams};
use hetq::sim::{run_with, RunOptions};
use hetq::ssc::{self, FairnessAccumulator, Partition, SscFunctionSpec};
use hetq::{quad, AbandonMode, RateDistribution, RealizedSystem};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = DiffusionParams> {
    let with_aband = (-3.0..1.5f64, 0.5..4.0f64, 0.3..3.0f64, 0.2..3.0f64);
    let without = (-3.0..-0.05f64, 0.5..4.0f64, 0.3..3.0f64);
    prop_oneof![
        with_aband.prop_map(|(b, s, g, n)| DiffusionParams::new(b, s, g, n).unwrap()),
        without.prop_map(|(b, s, g)| DiffusionParams::new(b, s, g, 0.0).unwrap()),
    ]
}

proptest! {
    #[test]
    fn gamma_lisf_is_at_least_the_mean(lo in 0.05..5.0f64, width in 0.0..5.0f64) {
        let d = RateDistribution::uniform(lo, lo + width.max(1e-9)).unwrap();
        let m = d.moments();
        prop_assert!(m.gamma_lisf >= m.mean * (1.0 - 1e-15));
        prop_assert!(m.gamma_fsf <= m.mean);
    }

    #[test]
    fn halfin_whitt_staffing_is_monotone(lambda in 0.1..5000.0f64, mu in 0.2..5.0f64, theta in 0.0..4.0f64, dl in 0.0..100.0f64, dt in 0.0..1.0f64) {
        let n = halfin_whitt_servers(lambda, mu, theta);
        prop_assert!(n as f64 >= lambda / mu - 1e-9);
        prop_assert!(halfin_whitt_servers(lambda + dl, mu, theta) >= n);
        prop_assert!(halfin_whitt_servers(lambda, mu, theta + dt) >= n);
    }

    #[test]
    fn delay_probability_falls_with_safety_and_rises_with_gamma(beta in -4.0..-0.01f64, db in 0.01..1.0f64, sigma in 0.3..4.0f64, gamma in 0.2..3.0f64, dg in 0.01..1.0f64) {
        let p = diffusion::prob_wait_no_aband(beta, sigma, gamma).unwrap();
        prop_assert!(diffusion::prob_wait_no_aband(beta - db, sigma, gamma).unwrap() < p);
        // The idle-side density exp((2/σ²)(βx − γx²/2)), x < 0, shrinks pointwise as γ grows.
        prop_assert!(diffusion::prob_wait_no_aband(beta, sigma, gamma + dg).unwrap() > p);
    }

    #[test]
    fn density_normalizes_and_is_continuous(p in params()) {
        let d = diffusion::stationary(&p).unwrap();
        let mass = quad::integrate_lower(|x| d.pdf(x), 0.0, 0.0, 1e-12).value
            + quad::integrate_upper(|x| d.pdf(x), 0.0, 0.0, 1e-12).value;
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
        prop_assert!(d.continuity_residual() < 1e-9);
        prop_assert!((d.cdf(0.0) - (1.0 - d.varrho)).abs() < 1e-10);
    }

    #[test]
    fn positive_part_matches_quadrature(p in params()) {
        let d = diffusion::stationary(&p).unwrap();
        let closed = diffusion::expected_positive_part(&p).unwrap();
        let numeric = quad::integrate_upper(|x| x * d.pdf(x), 0.0, 0.0, 1e-12).value;
        prop_assert!((closed - numeric).abs() <= 1e-8 * closed.abs().max(1e-300), "{closed} vs {numeric}");
    }

    #[test]
    fn ssc_g_is_homogeneous(b1 in 0.05..0.95f64, m1 in 0.2..2.0f64, dm in 0.1..2.0f64, z in prop::array::uniform2(-5.0..5.0f64), q in 0.0..5.0f64, alpha in 0.0..1.0f64) {
        let spec = SscFunctionSpec::new(vec![b1, 1.0 - b1], vec![m1, m1 + dm]).unwrap();
        let g = ssc::ssc_g(&spec, q, &z);
        let scaled = ssc::ssc_g(&spec, alpha * q, &[alpha * z[0], alpha * z[1]]);
        prop_assert!((scaled - alpha * g).abs() <= 1e-12 * g.max(1.0));
        prop_assert!(g >= 0.0);
    }

    #[test]
    fn ssc_g_vanishes_on_its_kernel(b1 in 0.05..0.95f64, m1 in 0.2..2.0f64, dm in 0.1..2.0f64, t in -5.0..5.0f64) {
        let spec = SscFunctionSpec::new(vec![b1, 1.0 - b1], vec![m1, m1 + dm]).unwrap();
        // Σ z_i (μ_i − γ) = 0 along z = t·(γ − μ_2, μ_1 − γ).
        let z = [t * (spec.gamma_i - spec.mu[1]), t * (spec.mu[0] - spec.gamma_i)];
        prop_assert!(ssc::ssc_g(&spec, 0.0, &z) < 1e-12);
    }

    #[test]
    fn static_plan_homogeneity(b1 in 0.05..0.95f64, m1 in 0.2..2.0f64, dm in 0.1..2.0f64, lambda in 0.0..10.0f64, a in 0.1..10.0f64) {
        let beta = [b1, 1.0 - b1];
        let mu = [m1, m1 + dm];
        let base = ssc::static_planning_inverted_v(&beta, &mu, lambda).unwrap().rho_star;
        let by_lambda = ssc::static_planning_inverted_v(&beta, &mu, a * lambda).unwrap().rho_star;
        let by_mu = ssc::static_planning_inverted_v(&beta, &[a * mu[0], a * mu[1]], lambda).unwrap().rho_star;
        prop_assert!((by_lambda - a * base).abs() <= 1e-12 * by_lambda.max(1.0));
        prop_assert!((by_mu - base / a).abs() <= 1e-12 * base.max(1.0));
    }
}

fn fairness_path(seed: u64, lambda: f64) -> (SystemConfig, RealizedSystem, hetq::sim::PathRecord) {
    let mut kv = KvConfig::default();
    for (k, v) in [
        ("lambda", lambda.to_string()),
        ("staffing", "fixed".into()),
        ("servers", "40".into()),
        ("rates", "uniform(0.5,1.5)".into()),
        ("horizon", "20".into()),
        ("grid", "200".into()),
        ("seed", seed.to_string()),
    ] {
        kv.set(k, v);
    }
    let c = SystemConfig::from_kv(&kv).unwrap();
    let sys = RealizedSystem::realize(&c, 0);
    let path = run_with(&c, &sys, AbandonMode::None, &RunOptions::from_config(&c)).unwrap();
    (c, sys, path)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fairness_shares_sum_to_one_and_refine(seed in 0u64..1000, lambda in 10.0..38.0f64, bins in 1usize..8) {
        let (c, sys, path) = fairness_path(seed, lambda);
        let coarse = Partition::equal_width(0.5, 1.5, bins);
        let fine = Partition::equal_width(0.5, 1.5, 2 * bins);
        let est = |p: Partition| {
            let mut acc = FairnessAccumulator::new(p, &c.rates, Policy::Lisf);
            acc.add(&path, &sys.mu, 0).unwrap();
            acc.finish().unwrap()
        };
        let a = est(coarse);
        let b = est(fine);
        prop_assert!((a.eta_hat.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((b.eta_hat.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..bins {
            let merged = b.eta_hat[2 * i] + b.eta_hat[2 * i + 1];
            prop_assert!((merged - a.eta_hat[i]).abs() < 1e-9, "bin {i}: {merged} vs {}", a.eta_hat[i]);
        }
        prop_assert!((a.mean_idle - b.mean_idle).abs() < 1e-9);
    }
}

//! A configuration with its server rates drawn: the object a simulation runs on.

use crate::config::{SystemConfig};
use crate::dist::RateDistribution;
use crate::error::{HetqError, Result};
use crate::rng::{stream, Purpose};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizedSystem {
    pub n: usize,
    pub mu: Vec<f64>,
    /// Pool index of each server; all zero for a single pool.
    pub pool_of: Vec<usize>,
    pub pool_sizes: Vec<usize>,
    pub sum_mu: f64,
    /// (Σμ_k − Nμ̄)/√r.
    pub zeta_hat: f64,
    pub mu_bar: f64,
    pub r: f64,
    pub lambda: f64,
    pub stable: bool,
}

/// β = −ζ − θμ̄.
pub fn drift_beta(theta: f64, zeta: f64, mu_bar: f64) -> f64 {
    -zeta - theta * mu_bar
}

/// Finite-r drift −(Σμ_k − Nμ̄)/√r − xμ̄.
pub fn drift_beta_finite(sum_mu: f64, n: usize, r: f64, mu_bar: f64, x: f64) -> f64 {
    -(sum_mu - n as f64 * mu_bar) / r.sqrt() - x * mu_bar
}

/// Split `n` servers across pool fractions by largest remainder.
pub fn pool_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|b| b * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

impl RealizedSystem {
    /// Draw rates for replication `rep`. Inverted-V configs are deterministic.
    pub fn realize(config: &SystemConfig, rep: u64) -> Self {
        let n = config.servers();
        match &config.pools {
            Some(pools) => {
                let fractions: Vec<f64> = pools.iter().map(|p| p.fraction).collect();
                let sizes = pool_sizes(n, &fractions);
                let mut mu = Vec::with_capacity(n);
                let mut pool_of = Vec::with_capacity(n);
                for (i, (&s, p)) in sizes.iter().zip(pools).enumerate() {
                    mu.extend(std::iter::repeat_n(p.rate, s));
                    pool_of.extend(std::iter::repeat_n(i, s));
                }
                Self::build(config, mu, pool_of, sizes)
            }
            None => {
                let mut rng = stream(config.seed, rep, Purpose::Rates);
                let mu = config.rates.sample_n(n, &mut rng);
                Self::build(config, mu, vec![0; n], vec![n])
            }
        }
    }

    /// Use an explicit rate vector (single pool).
    pub fn from_rates(config: &SystemConfig, mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(HetqError::config("servers", "empty rate vector"));
        }
        if mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(HetqError::config("rates", "rates must be positive and finite"));
        }
        let n = mu.len();
        Ok(Self::build(config, mu, vec![0; n], vec![n]))
    }

    fn build(config: &SystemConfig, mu: Vec<f64>, pool_of: Vec<usize>, pool_sizes: Vec<usize>) -> Self {
        let n = mu.len();
        let sum_mu: f64 = mu.iter().sum();
        let mu_bar = config.mu_bar();
        RealizedSystem {
            n,
            zeta_hat: (sum_mu - n as f64 * mu_bar) / config.r.sqrt(),
            mu,
            pool_of,
            pool_sizes,
            sum_mu,
            mu_bar,
            r: config.r,
            lambda: config.lambda,
            stable: sum_mu > config.lambda,
        }
    }

    pub fn pools(&self) -> usize {
        self.pool_sizes.len()
    }

    /// Finite-r drift with the realized safety coefficient.
    pub fn beta_r(&self) -> f64 {
        let load = self.lambda / self.mu_bar;
        let x = (self.n as f64 - load) / load.sqrt();
        drift_beta_finite(self.sum_mu, self.n, self.r, self.mu_bar, x)
    }
}

/// N i.i.d. draws from `dist` on the rates stream of (seed, rep).
pub fn sample_rates(dist: &RateDistribution, n: usize, seed: u64, rep: u64) -> Vec<f64> {
    let mut rng = stream(seed, rep, Purpose::Rates);
    dist.sample_n(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_examples() {
        assert_eq!(drift_beta(0.0, 0.0, 1.0), 0.0);
        assert_eq!(drift_beta(2.0, 0.0, 1.0), -2.0);
        let b = drift_beta_finite(108.0, 110, 100.0, 1.0, 1.0);
        assert!((b + 0.8).abs() < 1e-15);
    }

    #[test]
    fn pool_split_sums() {
        assert_eq!(pool_sizes(25, &[0.5, 0.5]), vec![13, 12]);
        assert_eq!(pool_sizes(400, &[0.5, 0.5]), vec![200, 200]);
        assert_eq!(pool_sizes(7, &[0.2, 0.3, 0.5]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn point_rates_are_constant() {
        let d = RateDistribution::point(1.0).unwrap();
        assert_eq!(sample_rates(&d, 3, 9, 0), vec![1.0, 1.0, 1.0]);
    }
}

//! Independent replications with fresh rate draws, fanned out over rayon.

use super::engine::{run_with, RunOptions};
use super::estimates::{steady_estimates, SteadyEstimates};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::system::RealizedSystem;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub rep: u64,
    pub n: usize,
    pub sum_mu: f64,
    pub zeta_hat: f64,
    pub beta_r: f64,
    pub overflow: bool,
    pub estimates: SteadyEstimates,
}

/// Run replication `rep`: draw rates on stream (seed, rep), simulate, estimate.
pub fn replication(config: &SystemConfig, rep: u64, opts: &RunOptions) -> Result<Replication> {
    let system = RealizedSystem::realize(config, rep);
    let mut o = opts.clone();
    o.replication = rep;
    let path = run_with(config, &system, config.abandonment, &o)?;
    let estimates = steady_estimates(&path, config.warmup)?;
    Ok(Replication {
        rep,
        n: system.n,
        sum_mu: system.sum_mu,
        zeta_hat: system.zeta_hat,
        beta_r: system.beta_r(),
        overflow: path.overflow,
        estimates,
    })
}

/// Replications 0..n_reps in index order, independent of scheduling.
pub fn replicate(config: &SystemConfig, n_reps: usize) -> Result<Vec<Replication>> {
    let mut opts = RunOptions::from_config(config);
    opts.record_idle = false;
    replicate_with(config, n_reps, &opts)
}

pub fn replicate_with(config: &SystemConfig, n_reps: usize, opts: &RunOptions) -> Result<Vec<Replication>> {
    (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| replication(config, rep, opts))
        .collect()
}

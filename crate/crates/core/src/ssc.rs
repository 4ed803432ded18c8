//! Inverted-V diagnostics: the SSC function, hydrodynamic rescaling of
//! windows, the multiplicative-SSC convergence experiment, fairness of
//! idleness across rate values, and the single-class static plan.

use crate::config::{validate_pools, AbandonMode, Policy, Pool, Staffing, SystemConfig};
use crate::dist::RateDistribution;
use crate::error::{HetqError, Result};
use crate::sim::{run_with, PathRecord, RunOptions};
use crate::system::{pool_sizes, RealizedSystem};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SscFunctionSpec {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    /// γ(I) = Σβ_l μ_l² / Σβ_l μ_l.
    pub gamma_i: f64,
}

impl SscFunctionSpec {
    pub fn new(beta: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if beta.len() != mu.len() {
            return Err(HetqError::config("pools", "beta and mu lengths differ"));
        }
        let pools: Vec<Pool> = beta
            .iter()
            .zip(&mu)
            .map(|(&fraction, &rate)| Pool { fraction, rate })
            .collect();
        validate_pools(&pools)?;
        let num: f64 = beta.iter().zip(&mu).map(|(b, m)| b * m * m).sum();
        let den: f64 = beta.iter().zip(&mu).map(|(b, m)| b * m).sum();
        Ok(SscFunctionSpec { beta, mu, gamma_i: num / den })
    }

    pub fn from_pools(pools: &[Pool]) -> Result<Self> {
        Self::new(pools.iter().map(|p| p.fraction).collect(), pools.iter().map(|p| p.rate).collect())
    }

    pub fn pools(&self) -> usize {
        self.beta.len()
    }
}

/// g(q, z) = |Σ z_i μ_i − γ(I) Σ z_i|. Does not depend on q.
pub fn ssc_g(spec: &SscFunctionSpec, _q: f64, z: &[f64]) -> f64 {
    assert_eq!(z.len(), spec.mu.len(), "pool vector has the wrong dimension");
    z.iter().zip(&spec.mu).map(|(zi, mi)| zi * (mi - spec.gamma_i)).sum::<f64>().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydroScaledPath {
    pub r: f64,
    pub m: f64,
    pub x_rm: f64,
    /// Window start in unscaled time, m/√|N|.
    pub start: f64,
    /// Rescaled times in [0, L].
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    /// Per-sample pool vectors.
    pub z: Vec<Vec<f64>>,
}

/// Rescale the window that starts at m/√|N| by x_{r,m} = max_i (Z_i − N_i)² ∨ |N|,
/// sampling `points` + 1 evenly spaced rescaled times on [0, L].
pub fn hydro_scale(path: &PathRecord, r: f64, m: f64, l: f64, points: usize) -> Result<HydroScaledPath> {
    let trace = path
        .trace
        .as_ref()
        .ok_or_else(|| HetqError::Window("path was recorded without an event trace".into()))?;
    let n_total = path.n as f64;
    let start = m / n_total.sqrt();
    let z0 = trace.z_at(start);
    let dev = z0
        .iter()
        .zip(&path.pool_sizes)
        .map(|(&z, &n)| (z as f64 - n as f64).abs())
        .fold(0.0, f64::max);
    let x_rm = (dev * dev).max(n_total);
    let end = start + x_rm.sqrt() * l / n_total;
    if end > path.end_time {
        return Err(HetqError::Window(format!(
            "window [{start}, {end}] runs past the path end {}",
            path.end_time
        )));
    }
    let scale = x_rm.sqrt();
    let points = points.max(1);
    let mut times = Vec::with_capacity(points + 1);
    let mut q = Vec::with_capacity(points + 1);
    let mut z = Vec::with_capacity(points + 1);
    for j in 0..=points {
        let t = l * j as f64 / points as f64;
        let s = start + scale * t / n_total;
        times.push(t);
        q.push(trace.q_at(s) as f64 / scale);
        z.push(
            trace
                .z_at(s)
                .iter()
                .zip(&path.pool_sizes)
                .map(|(&zi, &ni)| (zi as f64 - ni as f64) / scale)
                .collect(),
        );
    }
    Ok(HydroScaledPath { r, m, x_rm, start, times, q, z })
}

/// Fraction of (path, t1 < t2) sample pairs with
/// |X(t2) − X(t1)|∞ > N_const·(t2 − t1) + ε, where X = (q, z).
pub fn almost_lipschitz_check(paths: &[HydroScaledPath], n_const: f64, eps: f64) -> f64 {
    let mut total = 0u64;
    let mut bad = 0u64;
    for p in paths {
        for i in 0..p.times.len() {
            for j in i + 1..p.times.len() {
                let mut d = (p.q[j] - p.q[i]).abs();
                for (a, b) in p.z[j].iter().zip(&p.z[i]) {
                    d = d.max((a - b).abs());
                }
                total += 1;
                if d > n_const * (p.times[j] - p.times[i]) + eps {
                    bad += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Inverted-V config in heavy traffic: N = round(r) servers split by the
/// pool fractions, λ = Σ μ_i N_i − θ μ̄ √r.
pub fn heavy_traffic_config(pools: &[Pool], r: f64, theta: f64, policy: Policy, horizon: f64, seed: u64) -> Result<SystemConfig> {
    validate_pools(pools)?;
    let n = r.round() as usize;
    if n == 0 {
        return Err(HetqError::config("r", "scale index too small for any server"));
    }
    let sizes = pool_sizes(n, &pools.iter().map(|p| p.fraction).collect::<Vec<_>>());
    let capacity: f64 = sizes.iter().zip(pools).map(|(&s, p)| s as f64 * p.rate).sum();
    let mu_bar: f64 = pools.iter().map(|p| p.fraction * p.rate).sum();
    let rates = RateDistribution::discrete(pools.iter().map(|p| (p.rate, p.fraction)).collect())?;
    Ok(SystemConfig {
        r,
        lambda: capacity - theta * mu_bar * r.sqrt(),
        arrival_scv: 1.0,
        staffing: Staffing::Fixed(n),
        nu: 0.0,
        abandonment: AbandonMode::None,
        policy,
        seed,
        rates,
        pools: Some(pools.to_vec()),
        horizon,
        warmup: 0.0,
        initial_x: None,
        queue_cap: 1_000_000,
        grid: 1000,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SscRow {
    pub r: f64,
    pub rep: u64,
    pub g_supnorm: f64,
    /// ‖Ẑ‖_T ∨ 1.
    pub z_supnorm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SscSummary {
    pub r: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SscTable {
    pub rows: Vec<SscRow>,
    pub summary: Vec<SscSummary>,
}

/// Sup over [0, T] of g(Q̂, Ẑ) and of ‖Ẑ‖∞ with Ẑ_i = (Z_i − N_i)/√|N|,
/// taken over every event of the path.
pub fn ssc_sup_norms(spec: &SscFunctionSpec, path: &PathRecord) -> Result<(f64, f64)> {
    let trace = path
        .trace
        .as_ref()
        .ok_or_else(|| HetqError::Window("path was recorded without an event trace".into()))?;
    let scale = (path.n as f64).sqrt();
    let pools = trace.pools;
    let mut g_sup = 0.0f64;
    let mut z_sup = 0.0f64;
    let mut z = vec![0.0; pools];
    for e in 0..trace.len() {
        for i in 0..pools {
            z[i] = (trace.z[e * pools + i] as f64 - path.pool_sizes[i] as f64) / scale;
            z_sup = z_sup.max(z[i].abs());
        }
        g_sup = g_sup.max(ssc_g(spec, trace.q[e] as f64 / scale, &z));
    }
    Ok((g_sup, z_sup))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Multiplicative SSC ratios ‖g‖_T / (‖Ẑ‖_T ∨ 1) for each config and
/// replication, plus per-config medians and quartiles.
pub fn ssc_convergence(configs: &[SystemConfig], reps: usize) -> Result<SscTable> {
    let first = configs.first().ok_or_else(|| HetqError::config("ssc_r", "no scale indices given"))?;
    let pools = first
        .pools
        .clone()
        .ok_or_else(|| HetqError::config("pools", "SSC needs an inverted-V pool structure"))?;
    for c in configs {
        if c.pools.as_ref() != Some(&pools) {
            return Err(HetqError::config("pools", "pool structures differ across scale indices"));
        }
    }
    if reps == 0 {
        return Err(HetqError::config("reps", "need at least one replication"));
    }
    let spec = SscFunctionSpec::from_pools(&pools)?;
    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|ci| (0..reps as u64).map(move |rep| (ci, rep))).collect();
    let rows: Vec<SscRow> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let config = &configs[ci];
            let system = RealizedSystem::realize(config, rep);
            let opts = RunOptions {
                horizon: config.horizon,
                grid: config.grid,
                replication: ((ci as u64) << 32) | rep,
                record_idle: false,
                record_waits: false,
                record_trace: true,
                audit: false,
            };
            let path = run_with(config, &system, config.abandonment, &opts)?;
            let (g_sup, z_sup) = ssc_sup_norms(&spec, &path)?;
            let denom = z_sup.max(1.0);
            Ok(SscRow {
                r: config.r,
                rep,
                g_supnorm: g_sup,
                z_supnorm: denom,
                ratio: g_sup / denom,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = configs
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let mut v: Vec<f64> = rows[ci * reps..(ci + 1) * reps].iter().map(|r| r.ratio).collect();
            v.sort_by(f64::total_cmp);
            SscSummary {
                r: c.r,
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
                mean: v.iter().sum::<f64>() / v.len() as f64,
            }
        })
        .collect();
    Ok(SscTable { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticPlan {
    pub rho_star: f64,
    pub x_star: Vec<f64>,
    pub heavy_traffic: bool,
}

/// Single-class inverted-V static plan: ρ* = λ/Σβ_iμ_i, every pool at ρ*.
pub fn static_planning_inverted_v(beta: &[f64], mu: &[f64], lambda: f64) -> Result<StaticPlan> {
    let cap: f64 = beta.iter().zip(mu).map(|(b, m)| b * m).sum();
    if !(cap > 0.0) {
        return Err(HetqError::Domain("sum of beta_i mu_i must be positive".into()));
    }
    let rho = lambda / cap;
    Ok(StaticPlan {
        rho_star: rho,
        x_star: vec![rho; beta.len()],
        heavy_traffic: (rho - 1.0).abs() <= 1e-9,
    })
}

/// Bins [e_0, e_1), ..., [e_{k−1}, e_k]; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub edges: Vec<f64>,
}

impl Partition {
    pub fn equal_width(p: f64, q: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let mut edges: Vec<f64> = (0..=bins).map(|i| p + (q - p) * i as f64 / bins as f64).collect();
        edges[bins] = q;
        Partition { edges }
    }

    /// Equal-width bins for continuous laws; one bin per atom otherwise.
    pub fn for_distribution(dist: &RateDistribution, bins: usize) -> Self {
        match dist {
            RateDistribution::Uniform { lo, hi } => Self::equal_width(*lo, *hi, bins),
            RateDistribution::Point { rate } => Partition { edges: vec![*rate, *rate] },
            RateDistribution::Discrete { atoms } => {
                let mut edges = vec![atoms[0].0];
                for w in atoms.windows(2) {
                    edges.push(0.5 * (w[0].0 + w[1].0));
                }
                edges.push(atoms[atoms.len() - 1].0);
                Partition { edges }
            }
        }
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let k = self.bins();
        if x < self.edges[0] || x > self.edges[k] {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(k - 1))
    }

    /// Theoretical idleness share of each bin under `policy`.
    pub fn theory(&self, dist: &RateDistribution, policy: Policy) -> Vec<f64> {
        let k = self.bins();
        match policy {
            Policy::Lisf | Policy::Random => {
                let mean = dist.mean();
                (0..k)
                    .map(|b| {
                        let hi = if b + 1 == k { f64::INFINITY } else { self.edges[b + 1] };
                        dist.partial_first_moment(self.edges[b], hi) / mean
                    })
                    .collect()
            }
            Policy::Fsf => {
                let slow = self.bin_of(dist.lower());
                (0..k).map(|b| if Some(b) == slow { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessEstimate {
    pub bins: Vec<(f64, f64)>,
    pub eta_hat: Vec<f64>,
    pub eta_theory: Vec<f64>,
    /// LISF share computed from the realized rates instead of the law.
    pub eta_realized: Vec<f64>,
    /// max_b |η̂(A_b) − η(A_b)|.
    pub sup_error: f64,
    /// sup over samples and bins of (1/√N)|Σ_{k∈A} I_k − η(A) Σ_k I_k|.
    pub discrepancy: f64,
    /// Average number of idle servers over the window.
    pub mean_idle: f64,
    pub paths: usize,
}

/// Pools idleness over one or more paths before normalizing.
#[derive(Debug, Clone)]
pub struct FairnessAccumulator {
    partition: Partition,
    theory: Vec<f64>,
    counts: Vec<f64>,
    realized_num: Vec<f64>,
    realized_den: f64,
    samples: usize,
    discrepancy: f64,
    paths: usize,
}

impl FairnessAccumulator {
    pub fn new(partition: Partition, dist: &RateDistribution, policy: Policy) -> Self {
        let k = partition.bins();
        FairnessAccumulator {
            theory: partition.theory(dist, policy),
            partition,
            counts: vec![0.0; k],
            realized_num: vec![0.0; k],
            realized_den: 0.0,
            samples: 0,
            discrepancy: 0.0,
            paths: 0,
        }
    }

    /// Add the grid samples of `path` from index `start` on.
    pub fn add(&mut self, path: &PathRecord, rates: &[f64], start: usize) -> Result<()> {
        let s = &path.samples;
        if !s.has_idle() {
            return Err(HetqError::config("record_idle", "path has no idle indicators"));
        }
        let k = self.partition.bins();
        let bin: Vec<Option<usize>> = rates.iter().map(|&m| self.partition.bin_of(m)).collect();
        for (b, &m) in bin.iter().zip(rates) {
            if let Some(b) = b {
                self.realized_num[*b] += m;
            }
            self.realized_den += m;
        }
        let scale = (path.n as f64).sqrt();
        let mut per_bin = vec![0u64; k];
        for j in start..s.len() {
            per_bin.iter_mut().for_each(|c| *c = 0);
            let mut total = 0u64;
            for w in 0..s.idle_words {
                let mut word = s.idle[j * s.idle_words + w];
                while word != 0 {
                    let bit = word.trailing_zeros() as usize;
                    word &= word - 1;
                    if let Some(b) = bin[w * 64 + bit] {
                        per_bin[b] += 1;
                    }
                    total += 1;
                }
            }
            for b in 0..k {
                self.counts[b] += per_bin[b] as f64;
                let d = (per_bin[b] as f64 - self.theory[b] * total as f64).abs() / scale;
                self.discrepancy = self.discrepancy.max(d);
            }
            self.samples += 1;
        }
        self.paths += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<FairnessEstimate> {
        let total: f64 = self.counts.iter().sum();
        if total == 0.0 {
            return Err(HetqError::NoIdleness);
        }
        let eta_hat: Vec<f64> = self.counts.iter().map(|c| c / total).collect();
        let sup_error = eta_hat
            .iter()
            .zip(&self.theory)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let e = &self.partition.edges;
        Ok(FairnessEstimate {
            bins: e.windows(2).map(|w| (w[0], w[1])).collect(),
            eta_hat,
            eta_theory: self.theory.clone(),
            eta_realized: self.realized_num.iter().map(|x| x / self.realized_den).collect(),
            sup_error,
            discrepancy: self.discrepancy,
            mean_idle: total / self.samples as f64,
            paths: self.paths,
        })
    }
}

/// η̂ over the samples of `path` from index `start` on, against the law's
/// theoretical idleness profile for `policy`.
pub fn fairness_estimate(
    path: &PathRecord,
    rates: &[f64],
    partition: &Partition,
    dist: &RateDistribution,
    policy: Policy,
    start: usize,
) -> Result<FairnessEstimate> {
    let mut acc = FairnessAccumulator::new(partition.clone(), dist, policy);
    acc.add(path, rates, start)?;
    acc.finish()
}

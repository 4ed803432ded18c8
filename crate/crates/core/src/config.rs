//! Flat `key = value` configuration files and the system configuration
//! built from them.

use crate::dist::RateDistribution;
use crate::error::{HetqError, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::str::FromStr;

/// Raw key-value pairs, ordered by key so serialization is stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KvConfig {
    pub entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HetqError::config(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(HetqError::config("", format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(KvConfig { entries })
    }

    /// Apply a `key=value` override.
    pub fn set_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HetqError::config(kv, "override must be key=value"))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| HetqError::config(key, format!("cannot parse value `{v}`"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parsed::<f64>(key)?.unwrap_or(default);
        if v.is_nan() {
            return Err(HetqError::config(key, "value is NaN"));
        }
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed::<usize>(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| HetqError::config(key, format!("cannot parse list entry `{t}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Render back to the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Policy {
    Lisf,
    Fsf,
    Random,
}

impl FromStr for Policy {
    type Err = HetqError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lisf" => Ok(Policy::Lisf),
            "fsf" => Ok(Policy::Fsf),
            "random" => Ok(Policy::Random),
            _ => Err(HetqError::config("policy", format!("unknown policy `{s}` (lisf|fsf|random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AbandonMode {
    None,
    /// Every waiting customer carries its own exponential patience clock.
    PerCustomer,
    /// Only the head of the queue abandons, at rate ν·Q(t).
    Perturbed,
}

impl FromStr for AbandonMode {
    type Err = HetqError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AbandonMode::None),
            "per_customer" => Ok(AbandonMode::PerCustomer),
            "perturbed" => Ok(AbandonMode::Perturbed),
            _ => Err(HetqError::config(
                "abandonment",
                format!("unknown mode `{s}` (none|per_customer|perturbed)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Staffing {
    Fixed(usize),
    HalfinWhitt { theta: f64 },
}

/// One homogeneous pool of an inverted-V system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pool {
    pub fraction: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub r: f64,
    pub lambda: f64,
    pub arrival_scv: f64,
    pub staffing: Staffing,
    pub nu: f64,
    pub abandonment: AbandonMode,
    pub policy: Policy,
    pub seed: u64,
    pub rates: RateDistribution,
    pub pools: Option<Vec<Pool>>,
    pub horizon: f64,
    pub warmup: f64,
    pub initial_x: Option<usize>,
    pub queue_cap: usize,
    pub grid: usize,
}

/// Keys understood by [`SystemConfig::from_kv`].
pub const SYSTEM_KEYS: &[&str] = &[
    "r",
    "lambda",
    "arrival_scv",
    "staffing",
    "theta",
    "servers",
    "nu",
    "abandonment",
    "policy",
    "seed",
    "rates",
    "pools",
    "horizon",
    "warmup",
    "initial_x",
    "queue_cap",
    "grid",
];

pub fn parse_pools(s: &str) -> Result<Vec<Pool>> {
    let mut pools = Vec::new();
    for item in s.split(',') {
        let (b, m) = item
            .split_once(':')
            .ok_or_else(|| HetqError::config("pools", format!("expected fraction:rate, got `{item}`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HetqError::config("pools", format!("cannot parse `{t}`")))
        };
        pools.push(Pool {
            fraction: parse(b)?,
            rate: parse(m)?,
        });
    }
    validate_pools(&pools)?;
    Ok(pools)
}

pub fn validate_pools(pools: &[Pool]) -> Result<()> {
    if pools.is_empty() {
        return Err(HetqError::config("pools", "at least one pool required"));
    }
    let total: f64 = pools.iter().map(|p| p.fraction).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(HetqError::config("pools", format!("fractions sum to {total}, not 1")));
    }
    for p in pools {
        if !(p.fraction > 0.0) || !(p.rate > 0.0 && p.rate.is_finite()) {
            return Err(HetqError::config("pools", "fractions and rates must be positive"));
        }
    }
    for w in pools.windows(2) {
        if !(w[0].rate < w[1].rate) {
            return Err(HetqError::config("pools", "pool rates must be strictly increasing"));
        }
    }
    Ok(())
}

impl SystemConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let lambda = kv.f64_or("lambda", 100.0)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(HetqError::config("lambda", "arrival rate must be finite and >= 0"));
        }
        let arrival_scv = kv.f64_or("arrival_scv", 1.0)?;
        if !(arrival_scv >= 0.0 && arrival_scv.is_finite()) {
            return Err(HetqError::config("arrival_scv", "must be >= 0"));
        }
        let pools = match kv.get("pools") {
            Some(s) if !s.is_empty() && s != "none" => Some(parse_pools(s)?),
            _ => None,
        };
        let rates = match (&pools, kv.get("rates")) {
            (Some(p), _) => {
                RateDistribution::discrete(p.iter().map(|p| (p.rate, p.fraction)).collect())
                    .map_err(|e| HetqError::config("pools", e.to_string()))?
            }
            (None, Some(s)) => RateDistribution::parse(s)?,
            (None, None) => RateDistribution::point(1.0)?,
        };
        let staffing = match kv.get("staffing").unwrap_or("halfin_whitt") {
            "halfin_whitt" => {
                let theta = kv.f64_or("theta", 1.0)?;
                if !(theta >= 0.0 && theta.is_finite()) {
                    return Err(HetqError::config("theta", "must be finite and >= 0"));
                }
                Staffing::HalfinWhitt { theta }
            }
            "fixed" => {
                let n = kv
                    .parsed::<usize>("servers")?
                    .ok_or_else(|| HetqError::config("servers", "fixed staffing needs `servers`"))?;
                Staffing::Fixed(n)
            }
            other => return Err(HetqError::config("staffing", format!("unknown rule `{other}` (halfin_whitt|fixed)"))),
        };
        if let Staffing::Fixed(0) = staffing {
            return Err(HetqError::config("servers", "need at least one server"));
        }
        let nu = kv.f64_or("nu", 0.0)?;
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(HetqError::config("nu", "abandonment rate must be >= 0"));
        }
        let abandonment = match kv.get("abandonment") {
            Some(s) => s.parse::<AbandonMode>()?,
            None if nu > 0.0 => AbandonMode::PerCustomer,
            None => AbandonMode::None,
        };
        if abandonment != AbandonMode::None && nu == 0.0 {
            return Err(HetqError::config("nu", "abandonment mode set but nu = 0"));
        }
        if abandonment == AbandonMode::None && nu > 0.0 {
            return Err(HetqError::config("abandonment", "nu > 0 but abandonment = none"));
        }
        let policy = kv.get("policy").unwrap_or("lisf").parse::<Policy>()?;
        let seed = kv.parsed::<u64>("seed")?.unwrap_or(1);
        let horizon = kv.f64_or("horizon", 1000.0)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(HetqError::config("horizon", "must be positive"));
        }
        let warmup = kv.f64_or("warmup", 0.2)?;
        if !(0.0..1.0).contains(&warmup) {
            return Err(HetqError::config("warmup", "fraction must lie in [0, 1)"));
        }
        let initial_x = kv.parsed::<usize>("initial_x")?;
        let queue_cap = kv.usize_or("queue_cap", 1_000_000)?;
        let grid = kv.usize_or("grid", 10_000)?;
        if grid == 0 {
            return Err(HetqError::config("grid", "need at least one grid interval"));
        }
        let mu_bar = rates.mean();
        let r = match kv.parsed::<f64>("r")? {
            Some(r) => r,
            None if lambda > 0.0 => lambda / mu_bar,
            None => match staffing {
                Staffing::Fixed(n) => n as f64,
                Staffing::HalfinWhitt { .. } => 1.0,
            },
        };
        if !(r > 0.0 && r.is_finite()) {
            return Err(HetqError::config("r", "scale index must be positive"));
        }
        Ok(SystemConfig {
            r,
            lambda,
            arrival_scv,
            staffing,
            nu,
            abandonment,
            policy,
            seed,
            rates,
            pools,
            horizon,
            warmup,
            initial_x,
            queue_cap,
            grid,
        })
    }

    pub fn mu_bar(&self) -> f64 {
        self.rates.mean()
    }

    /// Server count implied by the staffing rule.
    pub fn servers(&self) -> usize {
        match self.staffing {
            Staffing::Fixed(n) => n,
            Staffing::HalfinWhitt { theta } => halfin_whitt_servers(self.lambda, self.mu_bar(), theta),
        }
    }

    /// Realized safety coefficient (N − λ/μ̄)/√(λ/μ̄).
    pub fn safety(&self) -> f64 {
        let load = self.lambda / self.mu_bar();
        if load <= 0.0 {
            return f64::INFINITY;
        }
        (self.servers() as f64 - load) / load.sqrt()
    }
}

/// N = ⌈λ/μ̄ + θ√(λ/μ̄)⌉, at least 1.
pub fn halfin_whitt_servers(lambda: f64, mu_bar: f64, theta: f64) -> usize {
    let load = lambda / mu_bar;
    let target = load + theta * load.sqrt();
    // Absorb representation noise so exact integers are not pushed up by one.
    let n = (target * (1.0 - 1e-13)).ceil();
    (n as usize).max(1)
}

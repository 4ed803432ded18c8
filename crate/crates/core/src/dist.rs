//! Service-rate laws on a bounded positive support.

use crate::error::{HetqError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RateDistribution {
    Uniform { lo: f64, hi: f64 },
    /// Atoms sorted by rate, probabilities summing to 1.
    Discrete { atoms: Vec<(f64, f64)> },
    Point { rate: f64 },
}

/// First two moments plus the idleness coefficients for LISF and FSF routing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateMoments {
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    pub gamma_lisf: f64,
    pub gamma_fsf: f64,
}

impl RateDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(HetqError::config("rates", format!("uniform needs 0 < lo < hi < inf, got ({lo}, {hi})")));
        }
        Ok(RateDistribution::Uniform { lo, hi })
    }

    pub fn point(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(HetqError::config("rates", format!("point rate must be positive, got {rate}")));
        }
        Ok(RateDistribution::Point { rate })
    }

    pub fn discrete(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(HetqError::config("rates", "discrete law needs at least one atom"));
        }
        for &(x, p) in &atoms {
            if !(x > 0.0 && x.is_finite()) || !(p > 0.0 && p <= 1.0) {
                return Err(HetqError::config("rates", format!("bad atom ({x}, {p})")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(HetqError::config("rates", format!("atom probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(HetqError::config("rates", format!("duplicate atom at {}", w[0].0)));
            }
        }
        Ok(RateDistribution::Discrete { atoms })
    }

    /// Parse `uniform(a,b)`, `point(x)` or `discrete(x1:p1, x2:p2, ...)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || HetqError::config("rates", format!("cannot parse rate law `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let body = &s[open + 1..s.len() - 1];
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match name.as_str() {
            "uniform" => {
                let parts: Vec<&str> = body.split(',').collect();
                if parts.len() != 2 {
                    return Err(bad());
                }
                Self::uniform(num(parts[0])?, num(parts[1])?)
            }
            "point" => Self::point(num(body)?),
            "discrete" => {
                let mut atoms = Vec::new();
                for item in body.split(',') {
                    let (x, p) = item.split_once(':').ok_or_else(bad)?;
                    atoms.push((num(x)?, num(p)?));
                }
                Self::discrete(atoms)
            }
            _ => Err(bad()),
        }
    }

    /// Support infimum p.
    pub fn lower(&self) -> f64 {
        match self {
            RateDistribution::Uniform { lo, .. } => *lo,
            RateDistribution::Discrete { atoms } => atoms[0].0,
            RateDistribution::Point { rate } => *rate,
        }
    }

    /// Support supremum q.
    pub fn upper(&self) -> f64 {
        match self {
            RateDistribution::Uniform { hi, .. } => *hi,
            RateDistribution::Discrete { atoms } => atoms[atoms.len() - 1].0,
            RateDistribution::Point { rate } => *rate,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            RateDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            RateDistribution::Discrete { atoms } => atoms.iter().map(|(x, p)| x * p).sum(),
            RateDistribution::Point { rate } => *rate,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            RateDistribution::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            RateDistribution::Discrete { atoms } => atoms.iter().map(|(x, p)| x * x * p).sum(),
            RateDistribution::Point { rate } => rate * rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            RateDistribution::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            RateDistribution::Discrete { atoms } => {
                let m = self.mean();
                atoms.iter().map(|(x, p)| (x - m) * (x - m) * p).sum()
            }
            RateDistribution::Point { .. } => 0.0,
        }
    }

    pub fn moments(&self) -> RateMoments {
        let mean = self.mean();
        let second_moment = self.second_moment();
        RateMoments {
            mean,
            variance: self.variance(),
            second_moment,
            gamma_lisf: second_moment / mean,
            gamma_fsf: self.lower(),
        }
    }

    /// ∫_A x dm over the half-open interval [a, b), closed at b when b = q.
    pub fn partial_first_moment(&self, a: f64, b: f64) -> f64 {
        let closed = b >= self.upper();
        match self {
            RateDistribution::Uniform { lo, hi } => {
                let a = a.max(*lo);
                let b = b.min(*hi);
                if b <= a {
                    0.0
                } else {
                    (b * b - a * a) / (2.0 * (hi - lo))
                }
            }
            RateDistribution::Discrete { atoms } => atoms
                .iter()
                .filter(|(x, _)| *x >= a && (*x < b || (closed && *x <= b)))
                .map(|(x, p)| x * p)
                .sum(),
            RateDistribution::Point { rate } => {
                if *rate >= a && (*rate < b || (closed && *rate <= b)) {
                    *rate
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RateDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            RateDistribution::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, p) in atoms {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                atoms[atoms.len() - 1].0
            }
            RateDistribution::Point { rate } => *rate,
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

impl fmt::Display for RateDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateDistribution::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            RateDistribution::Point { rate } => write!(f, "point({rate})"),
            RateDistribution::Discrete { atoms } => {
                write!(f, "discrete(")?;
                for (i, (x, p)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}:{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Free-function form of [`RateDistribution::moments`].
pub fn rate_moments(dist: &RateDistribution) -> RateMoments {
    dist.moments()
}

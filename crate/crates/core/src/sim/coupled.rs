//! Coupled heterogeneous/homogeneous runs driven by one thinned Poisson
//! skeleton, so the two departure counts can be compared path by path.

use super::arrivals::ArrivalLaw;
use super::engine::IdleSet;
use crate::config::{AbandonMode, SystemConfig};
use crate::error::{HetqError, Result};
use crate::rng::{stream, Purpose};
use crate::system::RealizedSystem;
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;
use std::collections::VecDeque;

/// When to stop a coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CoupledLimit {
    Time(f64),
    SkeletonEvents(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPath {
    pub p_rate: f64,
    /// Skeleton rate N·q.
    pub skeleton_rate: f64,
    /// Times of the skeleton points.
    pub times: Vec<f64>,
    pub d_hom: Vec<u64>,
    pub d_het: Vec<u64>,
    /// Skeleton points where D_hom > D_het.
    pub violations: usize,
    pub arrivals: u64,
}

impl CoupledPath {
    pub fn ordered(&self) -> bool {
        self.violations == 0
    }
}

/// One of the two coupled systems.
struct Side {
    n: usize,
    x: usize,
    queue: VecDeque<f64>,
    departures: u64,
    abandons: u64,
    int_q: f64,
    /// Index into the shared abandonment threshold sequence.
    ab_index: usize,
}

impl Side {
    fn new(n: usize, x0: usize) -> Self {
        Side {
            n,
            x: x0,
            queue: std::iter::repeat_n(0.0, x0.saturating_sub(n)).collect(),
            departures: 0,
            abandons: 0,
            int_q: 0.0,
            ab_index: 0,
        }
    }

    fn busy(&self) -> usize {
        self.x.min(self.n)
    }

    fn next_abandon(&self, t: f64, nu: f64, thresholds: &[f64]) -> f64 {
        let q = self.queue.len();
        if q == 0 || nu == 0.0 {
            return f64::INFINITY;
        }
        t + (thresholds[self.ab_index] - nu * self.int_q) / (nu * q as f64)
    }

    fn abandon(&mut self, thresholds: &mut Vec<f64>, rng: &mut impl Rng) {
        self.queue.pop_front();
        self.x -= 1;
        self.abandons += 1;
        self.ab_index += 1;
        if self.ab_index == thresholds.len() {
            let e: f64 = rng.sample(Exp1);
            let last = thresholds[thresholds.len() - 1];
            thresholds.push(last + e);
        }
    }
}

/// Run the heterogeneous system (`system.mu`) and a homogeneous copy with
/// every rate equal to `p_rate` on common arrivals and a common rate-N·q
/// Poisson skeleton. A skeleton point with mark U frees a heterogeneous
/// server when U·N·q falls under the busy servers' summed rates (the server
/// whose rate interval contains it), and a homogeneous server when
/// U·N·q ≤ p·busy. Abandonment, if configured, is head-of-queue with one
/// shared unit-rate Poisson stream.
pub fn coupled_run(
    config: &SystemConfig,
    p_rate: f64,
    system: &RealizedSystem,
    limit: CoupledLimit,
    replication: u64,
) -> Result<CoupledPath> {
    let n = system.n;
    let min_mu = system.mu.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(p_rate > 0.0) || p_rate > min_mu {
        return Err(HetqError::config(
            "p_rate",
            format!("homogeneous rate {p_rate} must be positive and at most min mu_k = {min_mu}"),
        ));
    }
    let q_top = system.mu.iter().cloned().fold(0.0, f64::max).max(config.rates.upper());
    let skeleton_rate = n as f64 * q_top;
    let nu = if config.abandonment == AbandonMode::None { 0.0 } else { config.nu };

    let mut skel = stream(config.seed, replication, Purpose::Skeleton);
    let mut arr_rng = stream(config.seed, replication, Purpose::Arrivals);
    let mut route_rng = stream(config.seed, replication, Purpose::Routing);
    let mut pat_rng = stream(config.seed, replication, Purpose::Patience);
    let law = ArrivalLaw::new(config.lambda, config.arrival_scv);

    let x0 = config.initial_x.unwrap_or(n);
    let mut het = Side::new(n, x0);
    let mut hom = Side::new(n, x0);
    let mut het_busy = vec![false; n];
    let mut idle = IdleSet::new(config.policy, n);
    for (k, b) in het_busy.iter_mut().enumerate() {
        if k < x0 {
            *b = true;
        } else {
            idle.insert(k, 0.0, system.mu[k]);
        }
    }
    // Points of the shared unit-rate Poisson process, extended on demand.
    let mut thresholds = vec![pat_rng.sample::<f64, _>(Exp1)];
    let mut het_busy_rate: f64 = (0..n).filter(|&k| het_busy[k]).map(|k| system.mu[k]).sum();

    let mut t = 0.0;
    let mut next_arrival = law.sample(&mut arr_rng);
    let mut next_skel = {
        let e: f64 = skel.sample(Exp1);
        e / skeleton_rate
    };
    let mut out = CoupledPath {
        p_rate,
        skeleton_rate,
        times: Vec::new(),
        d_hom: Vec::new(),
        d_het: Vec::new(),
        violations: 0,
        arrivals: 0,
    };
    loop {
        let ab_het = het.next_abandon(t, nu, &thresholds);
        let ab_hom = hom.next_abandon(t, nu, &thresholds);
        let t_next = next_skel.min(next_arrival).min(ab_het).min(ab_hom);
        if let CoupledLimit::Time(h) = limit {
            if t_next > h {
                break;
            }
        }
        let dt = t_next - t;
        het.int_q += het.queue.len() as f64 * dt;
        hom.int_q += hom.queue.len() as f64 * dt;
        t = t_next;
        if t == next_skel {
            let u: f64 = skel.random();
            let level = u * skeleton_rate;
            // Homogeneous side.
            if level <= p_rate * hom.busy() as f64 && hom.busy() > 0 {
                hom.departures += 1;
                hom.x -= 1;
                hom.queue.pop_front();
            }
            // Heterogeneous side: locate the busy server whose rate interval holds `level`.
            if level <= het_busy_rate && het_busy_rate > 0.0 {
                let mut acc = 0.0;
                let mut freed = None;
                let mut last_busy = None;
                for k in 0..n {
                    if het_busy[k] {
                        acc += system.mu[k];
                        last_busy = Some(k);
                        if level <= acc {
                            freed = Some(k);
                            break;
                        }
                    }
                }
                let k = freed.or(last_busy).expect("a busy server exists");
                het.departures += 1;
                het.x -= 1;
                if het.queue.pop_front().is_none() {
                    het_busy[k] = false;
                    het_busy_rate -= system.mu[k];
                    idle.insert(k, t, system.mu[k]);
                }
            }
            out.times.push(t);
            out.d_hom.push(hom.departures);
            out.d_het.push(het.departures);
            if hom.departures > het.departures {
                out.violations += 1;
            }
            let e: f64 = skel.sample(Exp1);
            next_skel = t + e / skeleton_rate;
            if let CoupledLimit::SkeletonEvents(m) = limit {
                if out.times.len() >= m {
                    break;
                }
            }
        } else if t == next_arrival {
            out.arrivals += 1;
            het.x += 1;
            hom.x += 1;
            match idle.take(&mut route_rng) {
                Some(k) => {
                    het_busy[k] = true;
                    het_busy_rate += system.mu[k];
                }
                None => het.queue.push_back(t),
            }
            if hom.x > n {
                hom.queue.push_back(t);
            }
            next_arrival = t + law.sample(&mut arr_rng);
        } else if t == ab_het {
            het.abandon(&mut thresholds, &mut pat_rng);
        } else {
            hom.abandon(&mut thresholds, &mut pat_rng);
        }
        if out.times.len() > 50_000_000 {
            break;
        }
    }
    Ok(out)
}

//! Event-driven simulation of one run.

use super::arrivals::ArrivalLaw;
use crate::config::{AbandonMode, Policy, SystemConfig};
use crate::error::{HetqError, Result};
use crate::rng::RunStreams;
use crate::system::RealizedSystem;
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

/// Event classes in tie-break order: at equal times departures are handled
/// first, then abandonments, then arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventKind {
    Departure,
    Abandon,
    Arrival,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Recording switches for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub horizon: f64,
    pub grid: usize,
    pub replication: u64,
    pub record_idle: bool,
    pub record_waits: bool,
    pub record_trace: bool,
    pub audit: bool,
}

impl RunOptions {
    pub fn from_config(config: &SystemConfig) -> Self {
        RunOptions {
            horizon: config.horizon,
            grid: config.grid,
            replication: 0,
            record_idle: true,
            record_waits: false,
            record_trace: false,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Served,
    Abandoned,
    /// Still waiting when the run ended.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaitRecord {
    pub arrival: f64,
    pub wait: f64,
    pub outcome: Outcome,
}

/// State sampled on the uniform grid; cumulative fields are exact integrals
/// or counts up to each sample time.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Samples {
    pub pools: usize,
    pub idle_words: usize,
    pub times: Vec<f64>,
    pub x: Vec<u32>,
    pub q: Vec<u32>,
    /// Busy servers per pool, row-major with stride `pools`.
    pub z: Vec<u32>,
    pub abandons: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    /// Arrivals that found every server busy.
    pub delayed: Vec<u64>,
    /// ∫Q dt.
    pub cum_q: Vec<f64>,
    /// ∫1{Q > 0} dt.
    pub cum_q_pos: Vec<f64>,
    /// ∫1{X ≥ N} dt.
    pub cum_full: Vec<f64>,
    /// ∫Σ_k μ_k 1{k busy} dt, the service capacity in use.
    pub cum_work: Vec<f64>,
    /// Idle bitsets, stride `idle_words`; empty when not recorded.
    pub idle: Vec<u64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn z_at(&self, j: usize, pool: usize) -> u32 {
        self.z[j * self.pools + pool]
    }

    pub fn idle_at(&self, j: usize, server: usize) -> bool {
        let w = self.idle[j * self.idle_words + server / 64];
        (w >> (server % 64)) & 1 == 1
    }

    pub fn has_idle(&self) -> bool {
        !self.idle.is_empty()
    }
}

/// Exact state after every event, for windowed rescaling.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trace {
    pub pools: usize,
    pub times: Vec<f64>,
    pub q: Vec<u32>,
    pub z: Vec<u32>,
}

impl Trace {
    /// Index of the last recorded state at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn q_at(&self, t: f64) -> u32 {
        self.q[self.index_at(t)]
    }

    pub fn z_at(&self, t: f64) -> &[u32] {
        let i = self.index_at(t);
        &self.z[i * self.pools..(i + 1) * self.pools]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Per-event invariant checks, enabled by [`RunOptions::audit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AuditReport {
    pub events: u64,
    pub flow_violations: u64,
    pub work_violations: u64,
    pub lisf_violations: u64,
    pub fsf_violations: u64,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.flow_violations == 0 && self.work_violations == 0 && self.lisf_violations == 0 && self.fsf_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub n: usize,
    pub pool_sizes: Vec<usize>,
    pub r: f64,
    pub horizon: f64,
    /// Time the run stopped; below `horizon` only after an overflow.
    pub end_time: f64,
    /// The queue hit its cap and the run was stopped.
    pub overflow: bool,
    pub initial_x: usize,
    pub samples: Samples,
    pub waits: Option<Vec<WaitRecord>>,
    pub departures: Vec<u64>,
    pub busy_time: Vec<f64>,
    pub arrivals: u64,
    pub abandonments: u64,
    pub final_x: usize,
    pub trace: Option<Trace>,
    pub audit: Option<AuditReport>,
}

impl PathRecord {
    pub fn total_departures(&self) -> u64 {
        self.departures.iter().sum()
    }
}

#[derive(Clone, Copy)]
struct Timed {
    t: f64,
    id: u64,
}

impl PartialEq for Timed {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Timed {}
impl PartialOrd for Timed {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Timed {
    // Reversed so BinaryHeap pops the earliest (time, id).
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.id.cmp(&self.id))
    }
}

pub(crate) enum IdleSet {
    /// Idle times only grow, so longest-idle order is insertion order.
    Lisf(VecDeque<usize>),
    Fsf(BTreeSet<(Reverse<u64>, usize)>),
    Random { list: Vec<usize>, pos: Vec<usize> },
}

impl IdleSet {
    pub(crate) fn new(policy: Policy, n: usize) -> Self {
        match policy {
            Policy::Lisf => IdleSet::Lisf(VecDeque::with_capacity(n)),
            Policy::Fsf => IdleSet::Fsf(BTreeSet::new()),
            Policy::Random => IdleSet::Random {
                list: Vec::new(),
                pos: vec![usize::MAX; n],
            },
        }
    }

    pub(crate) fn insert(&mut self, k: usize, idle_since: f64, rate: f64) {
        match self {
            IdleSet::Lisf(s) => {
                debug_assert!(idle_since >= 0.0);
                s.push_back(k);
            }
            // Nonnegative f64 bit patterns sort like the values.
            IdleSet::Fsf(s) => {
                s.insert((Reverse(rate.to_bits()), k));
            }
            IdleSet::Random { list, pos } => {
                pos[k] = list.len();
                list.push(k);
            }
        }
    }

    pub(crate) fn take<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        match self {
            IdleSet::Lisf(s) => s.pop_front(),
            IdleSet::Fsf(s) => s.pop_first().map(|e| e.1),
            IdleSet::Random { list, pos } => {
                if list.is_empty() {
                    return None;
                }
                let i = rng.random_range(0..list.len());
                let k = list.swap_remove(i);
                if i < list.len() {
                    pos[list[i]] = i;
                }
                pos[k] = usize::MAX;
                Some(k)
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            IdleSet::Lisf(s) => s.len(),
            IdleSet::Fsf(s) => s.len(),
            IdleSet::Random { list, .. } => list.len(),
        }
    }
}

struct Engine<'a> {
    system: &'a RealizedSystem,
    mode: AbandonMode,
    nu: f64,
    policy: Policy,
    queue_cap: usize,
    opts: &'a RunOptions,
    streams: RunStreams,
    arrivals_law: ArrivalLaw,

    t: f64,
    x: usize,
    busy: Vec<bool>,
    idle_since: Vec<f64>,
    busy_since: Vec<f64>,
    busy_time: Vec<f64>,
    departures: Vec<u64>,
    z: Vec<u32>,
    idle: IdleSet,
    queue: BTreeMap<u64, f64>,
    next_id: u64,
    initial_ids: u64,

    dep_heap: BinaryHeap<Timed>,
    patience_heap: BinaryHeap<Timed>,
    next_arrival: f64,
    // Perturbed abandonment: fires when ν∫Q crosses the next unit-Poisson point.
    ab_threshold: f64,

    a_count: u64,
    d_count: u64,
    r_count: u64,
    delayed: u64,
    cum_q: f64,
    cum_q_pos: f64,
    cum_full: f64,
    busy_rate: f64,
    cum_work: f64,

    grid_dt: f64,
    next_grid: usize,
    samples: Samples,
    waits: Option<Vec<WaitRecord>>,
    trace: Option<Trace>,
    audit: Option<AuditReport>,
    x0: usize,
}

impl<'a> Engine<'a> {
    fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn sample(&mut self, ts: f64) {
        let dt = ts - self.t;
        let q = self.queue_len() as f64;
        let s = &mut self.samples;
        s.times.push(ts);
        s.x.push(self.x as u32);
        s.q.push(self.queue.len() as u32);
        s.z.extend_from_slice(&self.z);
        s.abandons.push(self.r_count);
        s.arrivals.push(self.a_count);
        s.departures.push(self.d_count);
        s.delayed.push(self.delayed);
        s.cum_q.push(self.cum_q + q * dt);
        s.cum_q_pos.push(self.cum_q_pos + if q > 0.0 { dt } else { 0.0 });
        s.cum_full.push(self.cum_full + if self.x >= self.system.n { dt } else { 0.0 });
        s.cum_work.push(self.cum_work + self.busy_rate * dt);
        if self.opts.record_idle {
            let start = s.idle.len();
            s.idle.resize(start + s.idle_words, 0);
            for (k, &b) in self.busy.iter().enumerate() {
                if !b {
                    s.idle[start + k / 64] |= 1u64 << (k % 64);
                }
            }
        }
    }

    /// Record grid points strictly before `t` (or up to and including it when
    /// `inclusive`), then integrate the state up to `t`.
    fn advance(&mut self, t: f64, inclusive: bool) {
        while self.next_grid <= self.opts.grid {
            let tj = self.next_grid as f64 * self.grid_dt;
            if tj < t || (inclusive && tj <= t) {
                self.sample(tj);
                self.next_grid += 1;
            } else {
                break;
            }
        }
        let dt = t - self.t;
        if dt > 0.0 {
            let q = self.queue_len() as f64;
            self.cum_q += q * dt;
            if q > 0.0 {
                self.cum_q_pos += dt;
            }
            if self.x >= self.system.n {
                self.cum_full += dt;
            }
            self.cum_work += self.busy_rate * dt;
        }
        self.t = t;
    }

    fn start_service(&mut self, k: usize) {
        self.busy[k] = true;
        self.busy_rate += self.system.mu[k];
        self.busy_since[k] = self.t;
        self.z[self.system.pool_of[k]] += 1;
        let e: f64 = self.streams.service.sample(Exp1);
        self.dep_heap.push(Timed {
            t: self.t + e / self.system.mu[k],
            id: k as u64,
        });
    }

    fn record_wait(&mut self, id: u64, arrival: f64, outcome: Outcome) {
        if id < self.initial_ids {
            return;
        }
        let wait = self.t - arrival;
        if let Some(w) = self.waits.as_mut() {
            w.push(WaitRecord { arrival, wait, outcome });
        }
    }

    fn audit_route(&mut self, chosen: usize) {
        let Some(audit) = self.audit.as_mut() else { return };
        match self.policy {
            Policy::Lisf => {
                let best = (0..self.system.n)
                    .filter(|&k| !self.busy[k] || k == chosen)
                    .min_by(|&a, &b| self.idle_since[a].total_cmp(&self.idle_since[b]).then(a.cmp(&b)));
                if best != Some(chosen) {
                    audit.lisf_violations += 1;
                }
            }
            Policy::Fsf => {
                let best = (0..self.system.n)
                    .filter(|&k| !self.busy[k] || k == chosen)
                    .min_by(|&a, &b| self.system.mu[b].total_cmp(&self.system.mu[a]).then(a.cmp(&b)));
                if best != Some(chosen) {
                    audit.fsf_violations += 1;
                }
            }
            Policy::Random => {}
        }
    }

    fn audit_event(&mut self) {
        if self.audit.is_none() {
            return;
        }
        let n = self.system.n;
        let x = self.x;
        let q = self.queue_len();
        let idle = self.idle.len();
        let busy = self.busy.iter().filter(|&&b| b).count();
        let lhs = x as i64;
        let rhs = self.x0 as i64 + self.a_count as i64 - self.d_count as i64 - self.r_count as i64;
        let Some(audit) = self.audit.as_mut() else { return };
        audit.events += 1;
        if lhs != rhs || q != x.saturating_sub(n) || busy != x.min(n) {
            audit.flow_violations += 1;
        }
        if q > 0 && idle > 0 {
            audit.work_violations += 1;
        }
    }

    fn trace_state(&mut self) {
        if let Some(tr) = self.trace.as_mut() {
            tr.times.push(self.t);
            tr.q.push(self.queue.len() as u32);
            tr.z.extend_from_slice(&self.z);
        }
    }

    fn perturbed_next(&self) -> f64 {
        let q = self.queue_len();
        if q == 0 {
            return f64::INFINITY;
        }
        self.t + (self.ab_threshold - self.nu * self.cum_q) / (self.nu * q as f64)
    }

    fn next_patience(&mut self) -> f64 {
        while let Some(top) = self.patience_heap.peek() {
            if self.queue.contains_key(&top.id) {
                return top.t;
            }
            self.patience_heap.pop();
        }
        f64::INFINITY
    }

    fn on_arrival(&mut self) -> bool {
        self.a_count += 1;
        self.x += 1;
        let id = self.next_id;
        self.next_id += 1;
        match self.idle.take(&mut self.streams.routing) {
            Some(k) => {
                self.audit_route(k);
                self.start_service(k);
                if let Some(w) = self.waits.as_mut() {
                    w.push(WaitRecord {
                        arrival: self.t,
                        wait: 0.0,
                        outcome: Outcome::Served,
                    });
                }
            }
            None => {
                self.delayed += 1;
                if self.queue.len() >= self.queue_cap {
                    return false;
                }
                self.queue.insert(id, self.t);
                if self.mode == AbandonMode::PerCustomer {
                    let e: f64 = self.streams.patience.sample(Exp1);
                    self.patience_heap.push(Timed { t: self.t + e / self.nu, id });
                }
            }
        }
        let gap = self.arrivals_law.sample(&mut self.streams.arrivals);
        self.next_arrival = self.t + gap;
        true
    }

    fn on_departure(&mut self, k: usize) {
        self.d_count += 1;
        self.x -= 1;
        self.departures[k] += 1;
        self.busy_time[k] += self.t - self.busy_since[k];
        self.busy[k] = false;
        self.busy_rate -= self.system.mu[k];
        self.z[self.system.pool_of[k]] -= 1;
        if let Some((id, arrival)) = self.queue.pop_first() {
            self.record_wait(id, arrival, Outcome::Served);
            self.start_service(k);
        } else {
            self.idle_since[k] = self.t;
            self.idle.insert(k, self.t, self.system.mu[k]);
        }
    }

    fn on_abandon(&mut self, id: Option<u64>) {
        let entry = match id {
            Some(id) => self.queue.remove(&id).map(|a| (id, a)),
            None => self.queue.pop_first(),
        };
        if let Some((id, arrival)) = entry {
            self.r_count += 1;
            self.x -= 1;
            self.record_wait(id, arrival, Outcome::Abandoned);
        }
    }
}

/// Simulate with recording options taken from the config.
pub fn run(config: &SystemConfig, system: &RealizedSystem, mode: AbandonMode) -> Result<PathRecord> {
    run_with(config, system, mode, &RunOptions::from_config(config))
}

pub fn run_with(config: &SystemConfig, system: &RealizedSystem, mode: AbandonMode, opts: &RunOptions) -> Result<PathRecord> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(HetqError::config("horizon", "must be positive and finite"));
    }
    if mode != AbandonMode::None && !(config.nu > 0.0) {
        return Err(HetqError::config("nu", "abandonment mode requires nu > 0"));
    }
    if opts.grid == 0 {
        return Err(HetqError::config("grid", "need at least one grid interval"));
    }
    let n = system.n;
    let pools = system.pools();
    let x0 = config.initial_x.unwrap_or(n);
    let mut eng = Engine {
        system,
        mode,
        nu: config.nu,
        policy: config.policy,
        queue_cap: config.queue_cap,
        opts,
        streams: RunStreams::new(config.seed, opts.replication),
        arrivals_law: ArrivalLaw::new(config.lambda, config.arrival_scv),
        t: 0.0,
        x: x0,
        busy: vec![false; n],
        idle_since: vec![0.0; n],
        busy_since: vec![0.0; n],
        busy_time: vec![0.0; n],
        departures: vec![0; n],
        z: vec![0; pools],
        idle: IdleSet::new(config.policy, n),
        queue: BTreeMap::new(),
        next_id: 0,
        initial_ids: 0,
        dep_heap: BinaryHeap::with_capacity(n + 1),
        patience_heap: BinaryHeap::new(),
        next_arrival: f64::INFINITY,
        ab_threshold: 0.0,
        a_count: 0,
        d_count: 0,
        r_count: 0,
        delayed: 0,
        cum_q: 0.0,
        cum_q_pos: 0.0,
        cum_full: 0.0,
        busy_rate: 0.0,
        cum_work: 0.0,
        grid_dt: opts.horizon / opts.grid as f64,
        next_grid: 0,
        samples: Samples {
            pools,
            idle_words: if opts.record_idle { n.div_ceil(64) } else { 0 },
            ..Samples::default()
        },
        waits: opts.record_waits.then(Vec::new),
        trace: opts.record_trace.then(|| Trace { pools, ..Trace::default() }),
        audit: opts.audit.then(AuditReport::default),
        x0,
    };

    // Initial condition: the first min(x0, N) servers busy, the rest queued.
    for k in 0..n {
        if k < x0 {
            eng.start_service(k);
        } else {
            eng.idle.insert(k, 0.0, system.mu[k]);
        }
    }
    for _ in n..x0 {
        let id = eng.next_id;
        eng.next_id += 1;
        eng.queue.insert(id, 0.0);
        if mode == AbandonMode::PerCustomer {
            let e: f64 = eng.streams.patience.sample(Exp1);
            eng.patience_heap.push(Timed { t: e / eng.nu, id });
        }
    }
    eng.initial_ids = eng.next_id;
    if mode == AbandonMode::Perturbed {
        eng.ab_threshold = eng.streams.patience.sample(Exp1);
    }
    eng.next_arrival = eng.arrivals_law.sample(&mut eng.streams.arrivals);
    eng.trace_state();

    let horizon = opts.horizon;
    let mut overflow = false;
    loop {
        let t_dep = eng.dep_heap.peek().map_or(f64::INFINITY, |e| e.t);
        let t_ab = match mode {
            AbandonMode::None => f64::INFINITY,
            AbandonMode::PerCustomer => eng.next_patience(),
            AbandonMode::Perturbed => eng.perturbed_next(),
        };
        let t_arr = eng.next_arrival;
        let (t_next, kind) = if t_dep <= t_ab && t_dep <= t_arr {
            (t_dep, EventKind::Departure)
        } else if t_ab <= t_arr {
            (t_ab, EventKind::Abandon)
        } else {
            (t_arr, EventKind::Arrival)
        };
        if !(t_next <= horizon) {
            break;
        }
        eng.advance(t_next, false);
        match kind {
            EventKind::Departure => {
                let e = eng.dep_heap.pop().expect("peeked departure");
                eng.on_departure(e.id as usize);
            }
            EventKind::Abandon => match mode {
                AbandonMode::PerCustomer => {
                    let e = eng.patience_heap.pop().expect("peeked patience");
                    eng.on_abandon(Some(e.id));
                }
                _ => {
                    eng.on_abandon(None);
                    let e: f64 = eng.streams.patience.sample(Exp1);
                    eng.ab_threshold += e;
                }
            },
            EventKind::Arrival => {
                if !eng.on_arrival() {
                    overflow = true;
                    // The rejected arrival is not part of the path.
                    eng.a_count -= 1;
                    eng.x -= 1;
                    eng.delayed -= 1;
                    break;
                }
            }
            EventKind::End => unreachable!(),
        }
        eng.audit_event();
        eng.trace_state();
    }
    let end_time = if overflow { eng.t } else { horizon };
    eng.advance(end_time, true);
    for k in 0..n {
        if eng.busy[k] {
            eng.busy_time[k] += end_time - eng.busy_since[k];
        }
    }
    let remaining: Vec<(u64, f64)> = eng.queue.iter().map(|(&id, &a)| (id, a)).collect();
    for (id, a) in remaining {
        eng.record_wait(id, a, Outcome::Censored);
    }
    Ok(PathRecord {
        n,
        pool_sizes: system.pool_sizes.clone(),
        r: system.r,
        horizon,
        end_time,
        overflow,
        initial_x: x0,
        samples: eng.samples,
        waits: eng.waits,
        departures: eng.departures,
        busy_time: eng.busy_time,
        arrivals: eng.a_count,
        abandonments: eng.r_count,
        final_x: eng.x,
        trace: eng.trace,
        audit: eng.audit,
    })
}

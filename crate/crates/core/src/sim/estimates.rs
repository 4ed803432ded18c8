//! Steady-state estimates over the post-warmup part of a path.

use super::engine::PathRecord;
use crate::error::{HetqError, Result};
use serde::Serialize;

/// Batches used for the batch-means standard errors.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyEstimates {
    /// Fraction of window arrivals that found all servers busy.
    pub p_wait: f64,
    pub p_wait_se: f64,
    /// Time-average queue length.
    pub mean_q: f64,
    pub mean_q_se: f64,
    /// Abandonments per unit time.
    pub abandon_rate: f64,
    pub window: (f64, f64),
    pub window_arrivals: u64,
    /// (X(t) − N)/√r at the window's grid points.
    pub scaled_x_samples: Vec<f64>,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

/// First grid index inside the window that starts at `warmup` of the path.
pub fn window_start(path: &PathRecord, warmup_fraction: f64) -> usize {
    let t0 = warmup_fraction * path.end_time;
    path.samples.times.partition_point(|&t| t < t0 - 1e-12 * path.end_time.max(1.0))
}

pub fn steady_estimates(path: &PathRecord, warmup_fraction: f64) -> Result<SteadyEstimates> {
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(HetqError::config("warmup", "fraction must lie in [0, 1)"));
    }
    let s = &path.samples;
    if s.len() < 2 {
        return Err(HetqError::EmptyWindow("path has fewer than two samples".into()));
    }
    let j0 = window_start(path, warmup_fraction).min(s.len() - 1);
    let j1 = s.len() - 1;
    let (t0, t1) = (s.times[j0], s.times[j1]);
    let events = |j: usize| s.arrivals[j] + s.departures[j] + s.abandons[j];
    if j1 <= j0 || t1 <= t0 || events(j1) == events(j0) {
        return Err(HetqError::EmptyWindow(format!("no events in window [{t0}, {t1}]")));
    }
    let span = t1 - t0;
    let arrivals = s.arrivals[j1] - s.arrivals[j0];
    let p_wait_total = if arrivals > 0 {
        (s.delayed[j1] - s.delayed[j0]) as f64 / arrivals as f64
    } else {
        (s.cum_q_pos[j1] - s.cum_q_pos[j0]) / span
    };
    let mean_q = (s.cum_q[j1] - s.cum_q[j0]) / span;
    let abandon_rate = (s.abandons[j1] - s.abandons[j0]) as f64 / span;

    let batches = BATCHES.min(j1 - j0);
    let mut pw = Vec::with_capacity(batches);
    let mut mq = Vec::with_capacity(batches);
    for b in 0..batches {
        let a = j0 + (j1 - j0) * b / batches;
        let e = j0 + (j1 - j0) * (b + 1) / batches;
        let dt = s.times[e] - s.times[a];
        mq.push((s.cum_q[e] - s.cum_q[a]) / dt);
        let arr = s.arrivals[e] - s.arrivals[a];
        if arr > 0 {
            pw.push((s.delayed[e] - s.delayed[a]) as f64 / arr as f64);
        }
    }
    let (_, p_wait_se) = mean_and_se(&pw);
    let (_, mean_q_se) = mean_and_se(&mq);
    let sqrt_r = path.r.sqrt();
    let n = path.n as f64;
    let scaled_x_samples = s.x[j0..=j1].iter().map(|&x| (x as f64 - n) / sqrt_r).collect();
    Ok(SteadyEstimates {
        p_wait: p_wait_total,
        p_wait_se,
        mean_q,
        mean_q_se,
        abandon_rate,
        window: (t0, t1),
        window_arrivals: arrivals,
        scaled_x_samples,
    })
}

/// Delay probability with the served-work control variate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlledPWait {
    /// Batch-mean fraction of delayed arrivals.
    pub plain: f64,
    pub plain_se: f64,
    pub value: f64,
    pub se: f64,
    /// Fitted coefficient on the control.
    pub coefficient: f64,
    pub batches: usize,
}

/// Without abandonment, capacity in use averages to λ in steady state
/// (every arrival is eventually served). Batch deviations of that average
/// from λ are strongly correlated with the batch delay fraction, so they
/// make a cheap control variate.
pub fn p_wait_controlled(path: &PathRecord, warmup_fraction: f64, lambda: f64, batches: usize) -> Result<ControlledPWait> {
    let s = &path.samples;
    if s.len() < 2 || batches < 3 {
        return Err(HetqError::EmptyWindow("need at least three batches".into()));
    }
    if path.abandonments > 0 {
        return Err(HetqError::Domain("the served-work control needs a path without abandonment".into()));
    }
    let j0 = window_start(path, warmup_fraction).min(s.len() - 1);
    let j1 = s.len() - 1;
    if j1 - j0 < batches {
        return Err(HetqError::EmptyWindow(format!("{} samples cannot make {batches} batches", j1 - j0)));
    }
    let mut ys = Vec::with_capacity(batches);
    let mut xs = Vec::with_capacity(batches);
    for b in 0..batches {
        let a = j0 + (j1 - j0) * b / batches;
        let e = j0 + (j1 - j0) * (b + 1) / batches;
        let arr = s.arrivals[e] - s.arrivals[a];
        if arr == 0 {
            return Err(HetqError::EmptyWindow("a batch has no arrivals".into()));
        }
        ys.push((s.delayed[e] - s.delayed[a]) as f64 / arr as f64);
        xs.push((s.cum_work[e] - s.cum_work[a]) / (s.times[e] - s.times[a]) - lambda);
    }
    let k = batches as f64;
    let (my, plain_se) = mean_and_se(&ys);
    let mx = xs.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let coef = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - coef * (x - mx)).powi(2)).sum();
    Ok(ControlledPWait {
        plain: my,
        plain_se,
        value: my - coef * mx,
        se: (resid / (k - 2.0) / k).sqrt(),
        coefficient: coef,
        batches,
    })
}

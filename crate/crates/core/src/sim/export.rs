//! Plain-text renderings of simulation outputs.

use super::engine::PathRecord;
use std::fmt::Write;

/// Header `t,X,Q,Z_1..Z_I,R,A`.
pub fn path_header(pools: usize) -> String {
    let mut h = String::from("t,X,Q");
    for i in 1..=pools {
        let _ = write!(h, ",Z_{i}");
    }
    h.push_str(",R,A");
    h
}

pub fn path_csv(path: &PathRecord) -> String {
    let s = &path.samples;
    let mut out = path_header(s.pools);
    out.push('\n');
    for j in 0..s.len() {
        let _ = write!(out, "{},{},{}", s.times[j], s.x[j], s.q[j]);
        for i in 0..s.pools {
            let _ = write!(out, ",{}", s.z_at(j, i));
        }
        let _ = writeln!(out, ",{},{}", s.abandons[j], s.arrivals[j]);
    }
    out
}

/// One row per grid sample as (t, X, Q, [Z_i], R, A).
pub fn path_rows(path: &PathRecord) -> Vec<(f64, u32, u32, Vec<u32>, u64, u64)> {
    let s = &path.samples;
    (0..s.len())
        .map(|j| {
            (
                s.times[j],
                s.x[j],
                s.q[j],
                (0..s.pools).map(|i| s.z_at(j, i)).collect(),
                s.abandons[j],
                s.arrivals[j],
            )
        })
        .collect()
}

//! Which config keys each command reads, and their defaults.

use hetq::config::SYSTEM_KEYS;
use hetq::{HetqError, KvConfig, Result};

/// Defaults shared by every command that builds a system.
const SYSTEM_DEFAULTS: &[(&str, &str)] = &[
    ("lambda", "100"),
    ("arrival_scv", "1"),
    ("staffing", "halfin_whitt"),
    ("theta", "1"),
    ("nu", "0"),
    ("policy", "lisf"),
    ("seed", "1"),
    ("rates", "point(1)"),
    ("horizon", "1000"),
    ("warmup", "0.2"),
    ("queue_cap", "1000000"),
    ("grid", "10000"),
];

const STAFF_KEYS: &[(&str, &str)] = &[
    ("c_s", "1"),
    ("c_w", "1"),
    ("delay", "linear"),
    ("delay_k", "2"),
    ("delay_tau", "1"),
    ("d", "1"),
    ("c_un", "0"),
    ("x_lo", "0.05"),
    ("x_hi", "6"),
    ("tol", "1e-6"),
    ("nodes", "128"),
];

const ANALYZE_KEYS: &[(&str, &str)] = &[("density_points", "401")];
const ANALYZE_OPTIONAL: &[&str] = &["beta", "sigma", "gamma", "density_lo", "density_hi"];

const QL_KEYS: &[(&str, &str)] = &[
    ("ql_sigma", "4"),
    ("ql_theta", "2"),
    ("ql_nu", "2"),
    ("ql_mu_bar", "1"),
    ("ql_eps", "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"),
];

const SSC_KEYS: &[(&str, &str)] = &[("ssc_r", "25,100,400"), ("ssc_horizon", "10")];
const FAIRNESS_KEYS: &[(&str, &str)] = &[("bins", "10")];
const COUPLE_KEYS: &[(&str, &str)] = &[("skeleton_events", "10000")];

/// (keys with defaults, optional keys without one).
fn command_keys(command: &str) -> (&'static [(&'static str, &'static str)], &'static [&'static str]) {
    match command {
        "staff" => (STAFF_KEYS, &[]),
        "analyze" => (ANALYZE_KEYS, ANALYZE_OPTIONAL),
        "ql-sweep" => (QL_KEYS, &[]),
        "ssc" => (SSC_KEYS, &[]),
        "fairness" => (FAIRNESS_KEYS, &[]),
        "couple" => (COUPLE_KEYS, &["p_rate"]),
        _ => (&[], &[]),
    }
}

/// Reject keys the command does not read, naming the first offender.
pub fn check_known(command: &str, kv: &KvConfig) -> Result<()> {
    let (with_default, optional) = command_keys(command);
    for key in kv.entries.keys() {
        let known = SYSTEM_KEYS.contains(&key.as_str())
            || with_default.iter().any(|(k, _)| k == key)
            || optional.contains(&key.as_str());
        if !known {
            return Err(HetqError::config(key.clone(), format!("unknown key for `{command}`")));
        }
    }
    Ok(())
}

/// Write every defaulted key explicitly so a manifest fully pins the run.
pub fn resolve(command: &str, kv: &mut KvConfig) {
    let (with_default, _) = command_keys(command);
    let mut fill = |k: &str, v: &str| {
        if !kv.contains(k) {
            kv.set(k, v);
        }
    };
    for (k, v) in SYSTEM_DEFAULTS {
        fill(k, v);
    }
    if command == "ssc" {
        fill("pools", "0.5:1,0.5:2");
    }
    for (k, v) in with_default {
        fill(k, v);
    }
    // Abandonment follows nu unless given.
    if !kv.contains("abandonment") {
        let nu: f64 = kv.get("nu").and_then(|v| v.parse().ok()).unwrap_or(0.0);
        kv.set("abandonment", if nu > 0.0 { "per_customer" } else { "none" });
    }
}

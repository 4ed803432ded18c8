//! One function per subcommand; each turns a resolved config into artifacts.

use crate::keys;
use crate::output::{num, Artifacts, Manifest, Table};
use crate::{Common, Format};
use anyhow::{bail, Context, Result};
use hetq::config::{Staffing, SystemConfig};
use hetq::diffusion::{self, DiffusionParams, QlPolicy};
use hetq::sim::{self, coupled_run, run_with, steady_estimates, CoupledLimit, RunOptions, SteadyEstimates};
use hetq::ssc::{self, FairnessAccumulator, Partition};
use hetq::staffing::{self, CostContext, CostSpec, DelayCost, StaffingCost};
use hetq::{HetqError, KvConfig, RealizedSystem};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

fn default_reps(command: &str) -> usize {
    match command {
        "ssc" => 30,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<KvConfig> {
    let mut kv = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            KvConfig::parse(&text)?
        }
        None => KvConfig::default(),
    };
    for s in &common.set {
        kv.set_override(s)?;
    }
    if let Some(seed) = common.seed {
        kv.set("seed", seed);
    }
    Ok(kv)
}

pub fn dispatch(command: &str, common: &Common) -> Result<()> {
    let mut kv = load_config(common)?;
    keys::check_known(command, &kv)?;
    keys::resolve(command, &mut kv);
    let reps = common.reps.unwrap_or_else(|| default_reps(command));
    if reps == 0 {
        return Err(HetqError::config("reps", "need at least one replication").into());
    }
    let artifacts = run_command(command, &kv, reps, common.format)?;
    let manifest = finish(command, &kv, reps, common.format, &artifacts, &common.out)?;
    println!(
        "{command}: wrote {} artifact(s) and manifest.json to {}",
        manifest.artifacts.len(),
        common.out.display()
    );
    Ok(())
}

fn finish(command: &str, kv: &KvConfig, reps: usize, format: Format, artifacts: &Artifacts, out: &Path) -> Result<Manifest> {
    artifacts.write(out)?;
    let manifest = Manifest {
        tool: "hetq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        format: format.name().into(),
        seed: kv.parsed::<u64>("seed")?.unwrap_or(1),
        reps,
        config: kv.entries.clone(),
        artifacts: artifacts.checksums(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

pub fn rerun(manifest_path: &Path, out: &Path) -> Result<()> {
    let old = Manifest::read(manifest_path)?;
    let format = match old.format.as_str() {
        "csv" => Format::Csv,
        "json" => Format::Json,
        other => bail!("manifest has unknown format `{other}`"),
    };
    let kv = KvConfig { entries: old.config.clone() };
    keys::check_known(&old.command, &kv)?;
    let artifacts = run_command(&old.command, &kv, old.reps, format)?;
    let new = finish(&old.command, &kv, old.reps, format, &artifacts, out)?;
    let mismatched: Vec<&String> = old
        .artifacts
        .iter()
        .filter(|(name, sum)| new.artifacts.get(*name) != Some(*sum))
        .map(|(name, _)| name)
        .chain(new.artifacts.keys().filter(|k| !old.artifacts.contains_key(*k)))
        .collect();
    if !mismatched.is_empty() {
        bail!("artifacts differ from the manifest: {mismatched:?}");
    }
    println!("{}: reproduced {} artifact(s) byte-identically", old.command, new.artifacts.len());
    Ok(())
}

fn run_command(command: &str, kv: &KvConfig, reps: usize, format: Format) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match command {
        "simulate" => simulate(kv, reps, format, &mut art)?,
        "analyze" => analyze(kv, format, &mut art)?,
        "staff" => staff(kv, format, &mut art)?,
        "ql-sweep" => ql_sweep(kv, format, &mut art)?,
        "ssc" => ssc_cmd(kv, reps, format, &mut art)?,
        "fairness" => fairness(kv, reps, format, &mut art)?,
        "couple" => couple(kv, reps, format, &mut art)?,
        other => bail!("unknown command `{other}`"),
    }
    Ok(art)
}

fn f64_key(kv: &KvConfig, key: &str) -> Result<f64> {
    Ok(kv
        .parsed::<f64>(key)?
        .ok_or_else(|| HetqError::config(key, "missing value"))?)
}

fn list_key(kv: &KvConfig, key: &str) -> Result<Vec<f64>> {
    Ok(kv.f64_list(key)?.ok_or_else(|| HetqError::config(key, "missing value"))?)
}

/// Safety coefficient implied by the staffing rule.
fn safety(config: &SystemConfig) -> f64 {
    match config.staffing {
        Staffing::HalfinWhitt { theta } => theta,
        Staffing::Fixed(n) => {
            let load = config.lambda / config.mu_bar();
            if load > 0.0 {
                (n as f64 - load) / load.sqrt()
            } else {
                f64::INFINITY
            }
        }
    }
}

#[derive(Serialize)]
struct RepSummary {
    rep: u64,
    n: usize,
    sum_mu: f64,
    zeta_hat: f64,
    beta_r: f64,
    stable: bool,
    overflow: bool,
    arrivals: u64,
    abandonments: u64,
    estimates: Option<SteadyEstimatesOut>,
    estimate_error: Option<String>,
}

#[derive(Serialize)]
struct SteadyEstimatesOut {
    p_wait: f64,
    p_wait_se: f64,
    mean_q: f64,
    mean_q_se: f64,
    abandon_rate: f64,
    window: (f64, f64),
    window_arrivals: u64,
}

impl From<&SteadyEstimates> for SteadyEstimatesOut {
    fn from(e: &SteadyEstimates) -> Self {
        SteadyEstimatesOut {
            p_wait: e.p_wait,
            p_wait_se: e.p_wait_se,
            mean_q: e.mean_q,
            mean_q_se: e.mean_q_se,
            abandon_rate: e.abandon_rate,
            window: e.window,
            window_arrivals: e.window_arrivals,
        }
    }
}

fn simulate(kv: &KvConfig, reps: usize, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let mut opts = RunOptions::from_config(&config);
    opts.record_idle = false;
    let runs: Vec<(RealizedSystem, sim::PathRecord)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let system = RealizedSystem::realize(&config, rep);
            let mut o = opts.clone();
            o.replication = rep;
            let path = run_with(&config, &system, config.abandonment, &o)?;
            Ok((system, path))
        })
        .collect::<hetq::Result<_>>()?;

    let (system0, path0) = &runs[0];
    let mut cols = vec!["t".to_string(), "X".into(), "Q".into()];
    cols.extend((1..=system0.pools()).map(|i| format!("Z_{i}")));
    cols.extend(["R".to_string(), "A".into()]);
    let mut table = Table::with_columns(cols);
    for (t, x, q, z, r, a) in sim::export::path_rows(path0) {
        let mut row = vec![num(t), json!(x), json!(q)];
        row.extend(z.into_iter().map(|v| json!(v)));
        row.extend([json!(r), json!(a)]);
        table.push(row);
    }
    art.table("path", &table, format);

    let mut rep_table = Table::new(&[
        "rep", "n", "sum_mu", "zeta_hat", "beta_r", "overflow", "p_wait", "p_wait_se", "mean_q", "mean_q_se", "abandon_rate",
    ]);
    let mut summaries = Vec::with_capacity(reps);
    for (rep, (system, path)) in runs.iter().enumerate() {
        let est = steady_estimates(path, config.warmup);
        let cells = match &est {
            Ok(e) => [e.p_wait, e.p_wait_se, e.mean_q, e.mean_q_se, e.abandon_rate].map(num),
            Err(_) => [f64::NAN; 5].map(num),
        };
        let mut row = vec![
            json!(rep),
            json!(system.n),
            num(system.sum_mu),
            num(system.zeta_hat),
            num(system.beta_r()),
            json!(path.overflow),
        ];
        row.extend(cells);
        rep_table.push(row);
        summaries.push(RepSummary {
            rep: rep as u64,
            n: system.n,
            sum_mu: system.sum_mu,
            zeta_hat: system.zeta_hat,
            beta_r: system.beta_r(),
            stable: system.stable,
            overflow: path.overflow,
            arrivals: path.arrivals,
            abandonments: path.abandonments,
            estimates: est.as_ref().ok().map(SteadyEstimatesOut::from),
            estimate_error: est.as_ref().err().map(|e| e.to_string()),
        });
    }
    art.table("replications", &rep_table, format);
    art.json(
        "summary.json",
        &json!({
            "seed": config.seed,
            "servers": system0.n,
            "pool_sizes": system0.pool_sizes,
            "mu_bar": config.mu_bar(),
            "r": config.r,
            "lambda": config.lambda,
            "policy": config.policy,
            "abandonment": config.abandonment,
            "path": {
                "rep": 0,
                "end_time": path0.end_time,
                "overflow": path0.overflow,
                "arrivals": path0.arrivals,
                "abandonments": path0.abandonments,
                "departures": path0.total_departures(),
                "final_x": path0.final_x,
                "realized_rates": system0.mu,
            },
            "replications": summaries,
        }),
    )?;
    Ok(())
}

fn analyze(kv: &KvConfig, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let moments = config.rates.moments();
    let beta = match kv.parsed::<f64>("beta")? {
        Some(b) => b,
        None => hetq::drift_beta(safety(&config), 0.0, moments.mean),
    };
    let sigma = match kv.parsed::<f64>("sigma")? {
        Some(s) => s,
        None => diffusion::sigma_from(config.lambda / config.r, config.arrival_scv, moments.mean),
    };
    let gamma = match kv.parsed::<f64>("gamma")? {
        Some(g) => g,
        None => diffusion::gamma_for(config.policy, &moments),
    };
    let params = DiffusionParams::new(beta, sigma, gamma, config.nu)?;
    let density = diffusion::stationary(&params)?;
    let mean_pos = diffusion::expected_positive_part(&params)?;
    let (lo_hint, hi_hint) = density.support_hint();
    let lo = kv.parsed::<f64>("density_lo")?.unwrap_or(lo_hint);
    let hi = kv.parsed::<f64>("density_hi")?.unwrap_or(hi_hint);
    let points = kv.usize_or("density_points", 401)?;
    if !(lo < hi) || points < 2 {
        return Err(HetqError::config("density_points", "need lo < hi and at least two points").into());
    }
    let grid = density.grid(lo, hi, points);
    let mut table = Table::new(&["x", "density"]);
    for &(x, f) in &grid {
        table.push(vec![num(x), num(f)]);
    }
    art.table("density", &table, format);
    art.json(
        "analysis.json",
        &json!({
            "params": params,
            "varrho": density.varrho,
            "mean_positive_part": mean_pos,
            "continuity_residual": density.continuity_residual(),
            "density": grid.iter().map(|&(x, f)| json!({"x": x, "density": f})).collect::<Vec<Value>>(),
        }),
    )?;
    Ok(())
}

fn delay_cost(kv: &KvConfig) -> Result<DelayCost> {
    let c = f64_key(kv, "c_w")?;
    Ok(match kv.get("delay").unwrap_or("linear") {
        "linear" => DelayCost::Linear { c },
        "power" => DelayCost::Power { c, k: f64_key(kv, "delay_k")? },
        "saturating" => DelayCost::Saturating { c, tau: f64_key(kv, "delay_tau")? },
        other => return Err(HetqError::config("delay", format!("unknown delay cost `{other}` (linear|power|saturating)")).into()),
    })
}

fn staff(kv: &KvConfig, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let ctx = CostContext::from_config(&config);
    let cost = CostSpec {
        staffing: StaffingCost::Linear { c_s: f64_key(kv, "c_s")? },
        waiting: delay_cost(kv)?,
        abandon_cost: f64_key(kv, "d")?,
        unstable_cost: f64_key(kv, "c_un")?,
    };
    for key in ["c_s", "c_w", "d", "c_un"] {
        if f64_key(kv, key)? < 0.0 {
            return Err(HetqError::config(key, "cost coefficients must be >= 0").into());
        }
    }
    let nodes = kv.usize_or("nodes", staffing::NO_ABAND_NODES)?;
    let with_abandonment = config.nu > 0.0;
    let eval = |x: f64| -> hetq::Result<staffing::CostBreakdown> {
        if with_abandonment {
            staffing::cost_aband(x, &ctx, &cost)
        } else {
            staffing::cost_no_aband_nodes(x, &ctx, &cost, nodes)
        }
    };
    let bracket = (f64_key(kv, "x_lo")?, f64_key(kv, "x_hi")?);
    // Surface a real error (for instance a divergent integral) before the
    // optimizer turns failures into infinite costs.
    eval(bracket.1)?;
    let result = staffing::optimize_staffing(|x| eval(x).map(|b| b.total), bracket, f64_key(kv, "tol")?)?;
    let at = eval(result.x_star)?;
    let mut table = Table::new(&["x", "cost"]);
    for &(x, c) in &result.cost_curve {
        table.push(vec![num(x), num(c)]);
    }
    art.table("curve", &table, format);
    art.json(
        "staff.json",
        &json!({
            "model": if with_abandonment { "abandonment" } else { "no_abandonment" },
            "x_star": result.x_star,
            "N_star": ctx.servers_at(result.x_star).ceil(),
            "cost": result.cost_at_optimum,
            "breakdown": at,
            "unimodal": result.unimodal,
            "bracket": result.bracket,
            "tol": result.tol,
            "evaluations": result.evaluations,
            "context": ctx,
            "curve": result.cost_curve.iter().map(|&(x, c)| json!({"x": x, "cost": c})).collect::<Vec<Value>>(),
        }),
    )?;
    Ok(())
}

fn ql_sweep(kv: &KvConfig, format: Format, art: &mut Artifacts) -> Result<()> {
    let sigma = f64_key(kv, "ql_sigma")?;
    let theta = f64_key(kv, "ql_theta")?;
    let nu = f64_key(kv, "ql_nu")?;
    let mu_bar = f64_key(kv, "ql_mu_bar")?;
    let eps = list_key(kv, "ql_eps")?;
    let mut table = Table::new(&["eps", "QL_lisf", "QL_fsf"]);
    for &e in &eps {
        let lisf = diffusion::ql_eps(e, mu_bar, sigma, theta, nu, QlPolicy::Lisf)?;
        let fsf = diffusion::ql_eps(e, mu_bar, sigma, theta, nu, QlPolicy::Fsf)?;
        table.push(vec![num(e), num(lisf), num(fsf)]);
    }
    art.table("ql", &table, format);
    Ok(())
}

fn ssc_cmd(kv: &KvConfig, reps: usize, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let pools = config
        .pools
        .clone()
        .ok_or_else(|| HetqError::config("pools", "ssc needs an inverted-V pool structure"))?;
    let theta = match config.staffing {
        Staffing::HalfinWhitt { theta } => theta,
        Staffing::Fixed(_) => return Err(HetqError::config("staffing", "ssc sets heavy-traffic staffing itself; use halfin_whitt").into()),
    };
    let horizon = f64_key(kv, "ssc_horizon")?;
    let configs = list_key(kv, "ssc_r")?
        .into_iter()
        .map(|r| ssc::heavy_traffic_config(&pools, r, theta, config.policy, horizon, config.seed))
        .collect::<hetq::Result<Vec<_>>>()?;
    let result = ssc::ssc_convergence(&configs, reps)?;
    let mut table = Table::new(&["r", "rep", "g_supnorm", "z_supnorm", "ratio"]);
    for row in &result.rows {
        table.push(vec![num(row.r), json!(row.rep), num(row.g_supnorm), num(row.z_supnorm), num(row.ratio)]);
    }
    art.table("ssc", &table, format);
    art.json("ssc_summary.json", &json!({"theta": theta, "horizon": horizon, "summary": result.summary}))?;
    Ok(())
}

fn fairness(kv: &KvConfig, reps: usize, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let bins = kv.usize_or("bins", 10)?;
    if bins == 0 {
        return Err(HetqError::config("bins", "need at least one bin").into());
    }
    let partition = Partition::for_distribution(&config.rates, bins);
    let opts = RunOptions::from_config(&config);
    let runs: Vec<(RealizedSystem, sim::PathRecord)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let system = RealizedSystem::realize(&config, rep);
            let mut o = opts.clone();
            o.replication = rep;
            let path = run_with(&config, &system, config.abandonment, &o)?;
            Ok((system, path))
        })
        .collect::<hetq::Result<_>>()?;
    let mut acc = FairnessAccumulator::new(partition, &config.rates, config.policy);
    for (system, path) in &runs {
        acc.add(path, &system.mu, sim::estimates::window_start(path, config.warmup))?;
    }
    let est = acc.finish()?;
    let mut table = Table::new(&["bin_lo", "bin_hi", "eta_hat", "eta_theory"]);
    for (b, &(lo, hi)) in est.bins.iter().enumerate() {
        table.push(vec![num(lo), num(hi), num(est.eta_hat[b]), num(est.eta_theory[b])]);
    }
    art.table("fairness", &table, format);
    art.json("fairness.json", &est)?;
    Ok(())
}

fn couple(kv: &KvConfig, reps: usize, format: Format, art: &mut Artifacts) -> Result<()> {
    let config = SystemConfig::from_kv(kv)?;
    let p_rate = kv.parsed::<f64>("p_rate")?.unwrap_or(config.rates.lower());
    let events = kv.usize_or("skeleton_events", 10_000)?;
    let paths = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let system = RealizedSystem::realize(&config, rep);
            coupled_run(&config, p_rate, &system, CoupledLimit::SkeletonEvents(events), rep)
        })
        .collect::<hetq::Result<Vec<_>>>()?;
    let first = &paths[0];
    let mut table = Table::new(&["t", "D_hom", "D_het"]);
    for i in 0..first.times.len() {
        table.push(vec![num(first.times[i]), json!(first.d_hom[i]), json!(first.d_het[i])]);
    }
    art.table("couple", &table, format);
    let runs: Vec<Value> = paths
        .iter()
        .enumerate()
        .map(|(rep, p)| {
            json!({
                "rep": rep,
                "skeleton_points": p.times.len(),
                "violations": p.violations,
                "ordered": p.ordered(),
                "arrivals": p.arrivals,
                "final_d_hom": p.d_hom.last(),
                "final_d_het": p.d_het.last(),
            })
        })
        .collect();
    art.json(
        "couple.json",
        &json!({
            "p_rate": p_rate,
            "skeleton_rate": first.skeleton_rate,
            "ordered_runs": paths.iter().filter(|p| p.ordered()).count(),
            "runs": runs,
        }),
    )?;
    Ok(())
}

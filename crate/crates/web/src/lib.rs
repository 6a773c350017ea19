//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes the network config and distribution TOML as
//! text and returns a JSON string, so the page needs no glue beyond the
//! generated module.

use serde_json::json;
use transync::optimize::{solve_deterministic, SearchConfig, NOMINAL_SLACK};
use transync::scenario::mean_scenario;
use transync::{evaluate, parse_network, sample_scenarios, DistributionConfig, Mode, NetworkSpec, Timetable};
use wasm_bindgen::prelude::*;

pub const DEMO_NETWORK: &str = include_str!("../../../data/demo.cfg");
pub const DEMO_DISTS: &str = include_str!("../../../data/demo_dists.toml");

fn inputs(network: &str, dists: &str) -> Result<(NetworkSpec, DistributionConfig), String> {
    let net = parse_network(network, "network").map_err(|e| e.to_string())?;
    let d = DistributionConfig::parse(dists, "distributions").map_err(|e| e.to_string())?;
    d.validate(&net).map_err(|e| e.to_string())?;
    Ok((net, d))
}

fn mode(name: &str) -> Result<Mode, String> {
    match name {
        "sm" => Ok(Mode::Sm),
        "sdb" => Ok(Mode::Sdb),
        other => Err(format!("mode must be sm or sdb, got '{other}'")),
    }
}

/// Mean and per-scenario cost of `timetable` (JSON, or empty for the
/// nominal timetable) over `n` sampled scenarios.
pub fn score_json(network: &str, dists: &str, timetable: &str, n: usize, seed: u64) -> Result<String, String> {
    let (net, d) = inputs(network, dists)?;
    let set = sample_scenarios(&net, &d, n, seed).map_err(|e| e.to_string())?;
    let tt = if timetable.trim().is_empty() {
        Timetable::nominal(&net, &mean_scenario(&net, &d).map_err(|e| e.to_string())?, NOMINAL_SLACK)
    } else {
        let tt: Timetable = serde_json::from_str(timetable).map_err(|e| e.to_string())?;
        tt.check_shape(&net).map_err(|e| e.to_string())?;
        tt
    };
    let mut costs = Vec::with_capacity(n);
    let mut missed = 0;
    for sc in &set.scenarios {
        let r = evaluate(&tt, sc, &net, Mode::Sm).map_err(|e| e.to_string())?;
        costs.push(r.total());
        missed += r.cost.raw.missed_groups;
    }
    let mean = costs.iter().sum::<f64>() / n as f64;
    Ok(json!({ "mean": mean, "costs": costs, "missed_groups": missed }).to_string())
}

/// Optimizes the mean scenario under `mode`, spending at most `max_evals`
/// evaluations, and reports the nominal and optimized mean-scenario cost.
pub fn optimize_json(
    network: &str,
    dists: &str,
    mode_name: &str,
    max_evals: usize,
    seed: u64,
) -> Result<String, String> {
    let (net, d) = inputs(network, dists)?;
    let mode = mode(mode_name)?;
    let mean = mean_scenario(&net, &d).map_err(|e| e.to_string())?;
    let nominal = Timetable::nominal(&net, &mean, NOMINAL_SLACK);
    let before = evaluate(&nominal, &mean, &net, mode).map_err(|e| e.to_string())?.total();
    let cfg = SearchConfig { restarts: 0, max_evals, ..SearchConfig::default() };
    let (tt, stats) = solve_deterministic(&mean, &net, mode, &cfg, seed).map_err(|e| e.to_string())?;
    Ok(json!({
        "nominal_cost": before,
        "optimized_cost": stats.best,
        "evaluations": stats.evaluations,
        "timetable": tt,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn demo_network() -> String {
    DEMO_NETWORK.to_string()
}

#[wasm_bindgen]
pub fn demo_dists() -> String {
    DEMO_DISTS.to_string()
}

#[wasm_bindgen]
pub fn score(network: &str, dists: &str, timetable: &str, n: u32, seed: u32) -> Result<String, JsValue> {
    score_json(network, dists, timetable, n.max(1) as usize, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn optimize(network: &str, dists: &str, mode: &str, max_evals: u32, seed: u32) -> Result<String, JsValue> {
    optimize_json(network, dists, mode, max_evals as usize, seed as u64).map_err(|e| JsValue::from_str(&e))
}

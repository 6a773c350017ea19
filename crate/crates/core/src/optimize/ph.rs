use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Mode;
use crate::network::NetworkSpec;
use crate::scenario::{mix_seed, ScenarioSet};
use crate::timetable::Timetable;

use super::{saa_cost, solve_deterministic, solve_subproblem, SearchConfig};

/// `rho` is stated for departure times in seconds and costs in
/// person-seconds; on the minute scale used here the weight is 60·rho.
pub const RHO_UNIT_SCALE: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhConfig {
    /// Proximal weight, second-scale (see [`RHO_UNIT_SCALE`]).
    pub rho: f64,
    /// Stop once Σ p·|x_s - x̄|₂ falls to this value, minutes.
    pub theta: f64,
    pub k_max: usize,
    pub mode: Mode,
}

impl Default for PhConfig {
    fn default() -> Self {
        PhConfig { rho: 1.0, theta: 0.5, k_max: 15, mode: Mode::Sm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhIteration {
    pub k: usize,
    pub dispersion: f64,
    /// Best penalized subproblem value per scenario.
    pub subproblem_values: Vec<f64>,
    /// max over coordinates of |Σ p·μ|; zero up to rounding.
    pub multiplier_residual: f64,
    pub xbar: Vec<f64>,
    /// Expected cost of the projected consensus over the set.
    pub consensus_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhResult {
    /// Final consensus, projected.
    pub timetable: Timetable,
    /// Projected consensus with the lowest expected cost over all iterations.
    pub best: Timetable,
    pub best_k: usize,
    pub iterations: Vec<PhIteration>,
    pub converged: bool,
}

fn average(xs: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs[0].len()];
    for (x, w) in xs.iter().zip(p) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += w * v;
        }
    }
    out
}

fn dispersion(xs: &[Vec<f64>], p: &[f64], xbar: &[f64]) -> f64 {
    xs.iter().zip(p).map(|(x, w)| w * x.iter().zip(xbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).sum()
}

fn residual(mu: &[Vec<f64>], p: &[f64]) -> f64 {
    (0..mu[0].len()).map(|i| mu.iter().zip(p).map(|(m, w)| w * m[i]).sum::<f64>().abs()).fold(0.0, f64::max)
}

/// Progressive hedging over a (reduced) scenario set. Iteration 0 solves each
/// scenario alone; later iterations warm-start every subproblem at the
/// current consensus without restarts and use one shared seed, so identical
/// scenarios stay identical.
pub fn run_ph(
    set: &ScenarioSet,
    net: &NetworkSpec,
    ph: &PhConfig,
    search: &SearchConfig,
    seed: u64,
) -> Result<PhResult> {
    set.validate()?;
    if !(ph.rho > 0.0 && ph.rho.is_finite()) {
        return Err(Error::Config(format!("rho must be positive, got {}", ph.rho)));
    }
    if !(ph.theta >= 0.0) {
        return Err(Error::Config(format!("theta must be non-negative, got {}", ph.theta)));
    }
    let rho = ph.rho * RHO_UNIT_SCALE;
    let p = &set.probability;
    let n = set.len();
    let solved: Vec<Result<(Timetable, f64)>> = crate::par::map_range(n, |s| {
        solve_deterministic(&set.scenarios[s], net, ph.mode, search, mix_seed(seed, 0)).map(|(t, st)| (t, st.best))
    });
    let solved: Vec<(Timetable, f64)> = solved.into_iter().collect::<Result<_>>()?;
    let shape = solved[0].0.clone();
    let mut xs: Vec<Vec<f64>> = solved.iter().map(|(t, _)| t.flat()).collect();
    let mut values: Vec<f64> = solved.iter().map(|(_, v)| *v).collect();
    let mut xbar = average(&xs, p);
    let mut mu: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().zip(&xbar).map(|(a, b)| rho * (a - b)).collect()).collect();
    let mut iterations = Vec::new();
    let mut best: Option<(Timetable, f64, usize)> = None;
    let mut k = 0;
    loop {
        let disp = dispersion(&xs, p, &xbar);
        let mut consensus = shape.with_flat(&xbar);
        consensus.project(net);
        let consensus_cost = saa_cost(&consensus, set, net, ph.mode)?;
        iterations.push(PhIteration {
            k,
            dispersion: disp,
            subproblem_values: values.clone(),
            multiplier_residual: residual(&mu, p),
            xbar: xbar.clone(),
            consensus_cost,
        });
        if best.as_ref().is_none_or(|b| consensus_cost < b.1) {
            best = Some((consensus.clone(), consensus_cost, k));
        }
        // The initial solves are k = 0; the stopping test starts at k = 1.
        let converged = k >= 1 && disp <= ph.theta;
        if converged || k >= ph.k_max {
            let (best, _, best_k) = best.expect("at least one iteration");
            return Ok(PhResult { timetable: consensus, best, best_k, iterations, converged });
        }
        k += 1;
        let center = shape.with_flat(&xbar);
        // Later rounds refine from the consensus instead of re-exploring.
        let local = SearchConfig { restarts: 0, ..search.clone() };
        let round_seed = mix_seed(seed, k as u64);
        let solved: Vec<Result<(Timetable, f64)>> = crate::par::map_range(n, |s| {
            solve_subproblem(&set.scenarios[s], net, ph.mode, &mu[s], &center, rho, &local, round_seed)
                .map(|(t, st)| (t, st.best))
        });
        let solved: Vec<(Timetable, f64)> = solved.into_iter().collect::<Result<_>>()?;
        xs = solved.iter().map(|(t, _)| t.flat()).collect();
        values = solved.iter().map(|(_, v)| *v).collect();
        xbar = average(&xs, p);
        for (m, x) in mu.iter_mut().zip(&xs) {
            for ((mi, xi), bi) in m.iter_mut().zip(x).zip(&xbar) {
                *mi += rho * (xi - bi);
            }
        }
    }
}

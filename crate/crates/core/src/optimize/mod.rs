//! First-stage optimization: single-scenario solves, the penalized
//! progressive-hedging subproblem, and sample-average polishing.

mod ph;
mod search;

use crate::error::{Error, Result};
use crate::eval::{evaluate_with, EvaluationResult, Mode};
use crate::network::{NetworkSpec, Topology};
use crate::scenario::{Scenario, ScenarioSet};
use crate::timetable::Timetable;

pub use ph::{run_ph, PhConfig, PhIteration, PhResult, RHO_UNIT_SCALE};
pub use search::{local_search, Objective, SearchConfig, SearchStats};

/// Slack added per segment to the nominal starting timetable, minutes.
pub const NOMINAL_SLACK: f64 = 0.5;

/// One scenario's cost plus the augmented-Lagrangian penalty
/// `mu·(x - xbar) + rho/2·|x - xbar|²`.
struct Penalized<'a> {
    topo: &'a Topology,
    net: &'a NetworkSpec,
    sc: &'a Scenario,
    mode: Mode,
    mu: &'a [f64],
    xbar: Vec<f64>,
    rho: f64,
}

impl Objective for Penalized<'_> {
    fn value(&self, tt: &Timetable) -> f64 {
        let cost = evaluate_with(self.topo, tt, self.sc, self.net, self.mode).map_or(f64::INFINITY, |r| r.total());
        let x = tt.flat();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for ((x, xb), m) in x.iter().zip(&self.xbar).zip(self.mu) {
            let d = x - xb;
            lin += m * d;
            quad += d * d;
        }
        cost + lin + 0.5 * self.rho * quad
    }

    fn reference(&self, tt: &Timetable) -> Option<EvaluationResult> {
        evaluate_with(self.topo, tt, self.sc, self.net, self.mode).ok()
    }
}

/// Probability-weighted cost over a scenario set.
struct Saa<'a> {
    topo: &'a Topology,
    net: &'a NetworkSpec,
    set: &'a ScenarioSet,
    mode: Mode,
    /// Scenario used for event jumps.
    anchor: usize,
}

impl Objective for Saa<'_> {
    fn value(&self, tt: &Timetable) -> f64 {
        let costs = crate::par::map_range(self.set.len(), |s| {
            evaluate_with(self.topo, tt, &self.set.scenarios[s], self.net, self.mode)
                .map_or(f64::INFINITY, |r| r.total())
        });
        costs.iter().zip(&self.set.probability).map(|(c, p)| c * p).sum()
    }

    fn reference(&self, tt: &Timetable) -> Option<EvaluationResult> {
        evaluate_with(self.topo, tt, &self.set.scenarios[self.anchor], self.net, self.mode).ok()
    }
}

/// Expected cost of `tt` over `set`.
pub fn saa_cost(tt: &Timetable, set: &ScenarioSet, net: &NetworkSpec, mode: Mode) -> Result<f64> {
    let topo = Topology::build(net)?;
    let mut total = 0.0;
    for (sc, p) in set.scenarios.iter().zip(&set.probability) {
        total += p * evaluate_with(&topo, tt, sc, net, mode)?.total();
    }
    Ok(total)
}

/// Minimizes one scenario's cost from the nominal timetable.
pub fn solve_deterministic(
    sc: &Scenario,
    net: &NetworkSpec,
    mode: Mode,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(Timetable, SearchStats)> {
    sc.check_shape(net)?;
    let start = Timetable::nominal(net, sc, NOMINAL_SLACK);
    let zeros = vec![0.0; start.len()];
    solve_subproblem(sc, net, mode, &zeros, &start, 0.0, cfg, seed)
}

/// Minimizes scenario cost plus the hedging penalty, warm-started at `xbar`.
#[allow(clippy::too_many_arguments)]
pub fn solve_subproblem(
    sc: &Scenario,
    net: &NetworkSpec,
    mode: Mode,
    mu: &[f64],
    xbar: &Timetable,
    rho: f64,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(Timetable, SearchStats)> {
    let topo = Topology::build(net)?;
    sc.check_shape(net)?;
    xbar.check_shape(net)?;
    if mu.len() != xbar.len() {
        return Err(Error::Validation(format!(
            "multiplier length {} differs from timetable size {}",
            mu.len(),
            xbar.len()
        )));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Validation(format!("rho must be finite and non-negative, got {rho}")));
    }
    let f = Penalized { topo: &topo, net, sc, mode, mu, xbar: xbar.flat(), rho };
    Ok(local_search(&f, net, &topo, xbar, cfg, seed))
}

/// Local search on the expected full-model cost starting at `warm`, spending
/// at most `budget_evals` objective evaluations. Never returns a timetable
/// worse than the projected warm start.
pub fn polish(
    warm: &Timetable,
    set: &ScenarioSet,
    net: &NetworkSpec,
    cfg: &SearchConfig,
    budget_evals: usize,
    seed: u64,
) -> Result<(Timetable, SearchStats)> {
    polish_in_mode(warm, set, net, Mode::Sm, cfg, budget_evals, seed)
}

/// [`polish`] on the expected cost under an arbitrary evaluator mode.
pub fn polish_in_mode(
    warm: &Timetable,
    set: &ScenarioSet,
    net: &NetworkSpec,
    mode: Mode,
    cfg: &SearchConfig,
    budget_evals: usize,
    seed: u64,
) -> Result<(Timetable, SearchStats)> {
    set.validate()?;
    warm.check_shape(net)?;
    let topo = Topology::build(net)?;
    let mut start = warm.clone();
    start.project(net);
    if budget_evals == 0 {
        let f = saa_cost(&start, set, net, mode)?;
        return Ok((start, SearchStats { evaluations: 1, best: f, start_value: f, ..SearchStats::default() }));
    }
    let anchor = (0..set.len()).fold(0, |b, s| if set.probability[s] > set.probability[b] { s } else { b });
    let f = Saa { topo: &topo, net, set, mode, anchor };
    let cfg = SearchConfig { restarts: 0, max_evals: budget_evals, ..cfg.clone() };
    Ok(local_search(&f, net, &topo, &start, &cfg, seed))
}

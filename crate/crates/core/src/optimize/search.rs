//! Derivative-free local search over the timetable polytope.
//!
//! Moves shift one coordinate, one trip across all of its nodes, or a trip
//! and every later trip of the same line. Each move's step is clipped to the
//! exact feasible range with all other coordinates fixed, so iterates never
//! leave the feasible set. Event jumps snap single coordinates onto arrival
//! events read from a reference evaluation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::EvaluationResult;
use crate::network::{NetworkSpec, Topology};
use crate::scenario::mix_seed;
use crate::timetable::Timetable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Perturbed restarts after the warm start.
    pub restarts: usize,
    /// Step ladder in minutes, largest first.
    pub steps: Vec<f64>,
    /// Full passes over all moves per step before moving down the ladder.
    pub max_sweeps: usize,
    pub max_evals: usize,
    /// Restart perturbation as a fraction of each line's headway.
    pub restart_spread: f64,
    pub event_jumps: bool,
    pub time_limit_secs: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 2,
            steps: vec![4.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05],
            max_sweeps: 4,
            max_evals: 50_000,
            restart_spread: 0.3,
            event_jumps: true,
            time_limit_secs: None,
        }
    }
}

impl SearchConfig {
    /// Cheaper schedule for the many single-scenario solves of the reduction.
    pub fn light() -> Self {
        SearchConfig { restarts: 0, steps: vec![2.0, 0.5, 0.1], max_sweeps: 3, ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub evaluations: usize,
    pub accepted_moves: usize,
    pub restarts_run: usize,
    pub best: f64,
    pub start_value: f64,
    pub stopped_early: bool,
}

/// Function being minimized. `reference` exposes one evaluation of the
/// incumbent for event jumps.
pub trait Objective: Sync {
    fn value(&self, tt: &Timetable) -> f64;

    fn reference(&self, _tt: &Timetable) -> Option<EvaluationResult> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Coord { l: usize, p: usize, pos: usize },
    Column { l: usize, p: usize },
    Suffix { l: usize, p: usize },
}

fn all_moves(net: &NetworkSpec) -> Vec<Move> {
    let mut out = Vec::new();
    for (l, line) in net.lines.iter().enumerate() {
        let trips = net.trips(l);
        let n = line.node_sequence.len();
        for p in 0..trips {
            out.push(Move::Suffix { l, p });
            out.push(Move::Column { l, p });
            for pos in 0..n {
                out.push(Move::Coord { l, p, pos });
            }
        }
    }
    out
}

/// Range of shifts keeping every constraint touched by the move satisfied.
fn delta_range(tt: &Timetable, net: &NetworkSpec, mv: Move) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut clip = |range: (f64, f64), x: f64| {
        lo = lo.max(range.0 - x);
        hi = hi.min(range.1 - x);
    };
    match mv {
        Move::Coord { l, p, pos } => clip(tt.interval(net, l, p, pos), tt.pdep[l][p][pos]),
        Move::Column { l, p } => {
            for pos in 0..tt.pdep[l][p].len() {
                clip(tt.interval(net, l, p, pos), tt.pdep[l][p][pos]);
            }
        }
        Move::Suffix { l, p } => {
            let line = &net.lines[l];
            let rows = &tt.pdep[l];
            for pos in 0..rows[p].len() {
                let x = rows[p][pos];
                if p > 0 {
                    let prev = rows[p - 1][pos];
                    clip((prev + line.headway_min, prev + line.headway_max), x);
                } else {
                    let top = if pos == 0 { line.headway_max } else { f64::INFINITY };
                    clip((0.0, top), x);
                }
            }
        }
    }
    if lo > hi {
        // Rounding can leave the incumbent a hair outside a band; stay put.
        return (0.0, 0.0);
    }
    (lo, hi)
}

/// Values touched by `mv`, for exact restoration.
fn save(tt: &Timetable, mv: Move) -> Vec<f64> {
    match mv {
        Move::Coord { l, p, pos } => vec![tt.pdep[l][p][pos]],
        Move::Column { l, p } => tt.pdep[l][p].clone(),
        Move::Suffix { l, p } => tt.pdep[l][p..].iter().flatten().copied().collect(),
    }
}

fn restore(tt: &mut Timetable, mv: Move, saved: &[f64]) {
    match mv {
        Move::Coord { l, p, pos } => tt.pdep[l][p][pos] = saved[0],
        Move::Column { l, p } => tt.pdep[l][p].copy_from_slice(saved),
        Move::Suffix { l, p } => {
            for (x, v) in tt.pdep[l][p..].iter_mut().flatten().zip(saved) {
                *x = *v;
            }
        }
    }
}

fn apply(tt: &mut Timetable, mv: Move, d: f64) {
    match mv {
        Move::Coord { l, p, pos } => tt.pdep[l][p][pos] += d,
        Move::Column { l, p } => tt.pdep[l][p].iter_mut().for_each(|x| *x += d),
        Move::Suffix { l, p } => {
            for row in &mut tt.pdep[l][p..] {
                row.iter_mut().for_each(|x| *x += d);
            }
        }
    }
}

/// Absolute targets for single coordinates derived from arrival events.
fn event_targets(net: &NetworkSpec, topo: &Topology, tt: &Timetable, r: &EvaluationResult) -> Vec<(Move, f64)> {
    let mut out = Vec::new();
    for t in &r.traces {
        let mv = Move::Coord { l: t.line, p: t.trip, pos: t.pos };
        out.push((mv, t.aarr));
        out.push((mv, t.adep));
        let line = &net.lines[t.line];
        if !line.is_high_frequency() {
            out.push((mv, t.aarr + net.zone_boundary_frac_1 * line.headway_h));
            out.push((mv, t.aarr + net.zone_boundary_frac_2 * line.headway_h));
        }
    }
    for a in &r.assignments {
        let cl = a.connecting_line;
        let Some(pos) = net.lines[cl].stop_position(&net.transfer_nodes[a.node]) else { continue };
        let arrivals: Vec<f64> = (0..topo.trips[cl]).map(|q| r.aarr[cl][q][pos]).collect();
        let after = arrivals.iter().position(|&x| x >= a.stop_arrival);
        let near = [after.and_then(|q| q.checked_sub(1)), after].into_iter().flatten();
        for q in near {
            let gap = arrivals[q] - a.stop_arrival;
            let fp = a.feeder_trip;
            let fl = a.feeder_line;
            out.push((Move::Coord { l: fl, p: fp, pos: 0 }, tt.pdep[fl][fp][0] + gap));
            out.push((Move::Coord { l: cl, p: q, pos: 0 }, tt.pdep[cl][q][0] - gap));
            out.push((Move::Coord { l: cl, p: q, pos }, a.stop_arrival));
        }
    }
    out
}

struct Budget {
    /// Deadline clock; only started when a limit is set.
    clock: Option<(Instant, f64)>,
    max_evals: usize,
    evals: usize,
    exhausted: bool,
}

impl Budget {
    fn take(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        let over_time = self.clock.is_some_and(|(t, l)| t.elapsed().as_secs_f64() > l);
        if self.evals >= self.max_evals || over_time {
            self.exhausted = true;
            return false;
        }
        self.evals += 1;
        true
    }
}

#[allow(clippy::too_many_arguments)]
fn descend(
    f: &dyn Objective,
    net: &NetworkSpec,
    topo: &Topology,
    cfg: &SearchConfig,
    moves: &[Move],
    mut x: Timetable,
    mut fx: f64,
    budget: &mut Budget,
    accepted: &mut usize,
) -> (Timetable, f64) {
    let better = |a: f64, b: f64| a < b - 1e-12 * b.abs().max(1.0);
    for &step in &cfg.steps {
        for _ in 0..cfg.max_sweeps {
            let mut improved = false;
            for &mv in moves {
                let (lo, hi) = delta_range(&x, net, mv);
                let saved = save(&x, mv);
                let mut best: Option<(f64, f64)> = None;
                for d in [step, -step] {
                    let d = d.clamp(lo, hi);
                    if d.abs() < 1e-12 || !budget.take() {
                        continue;
                    }
                    apply(&mut x, mv, d);
                    let v = f.value(&x);
                    restore(&mut x, mv, &saved);
                    if better(v, best.map_or(fx, |b| b.1)) {
                        best = Some((d, v));
                    }
                }
                if let Some((d, v)) = best {
                    apply(&mut x, mv, d);
                    fx = v;
                    *accepted += 1;
                    improved = true;
                }
            }
            if cfg.event_jumps {
                improved |= jump_pass(f, net, topo, &mut x, &mut fx, budget, accepted);
            }
            if !improved || budget.exhausted {
                break;
            }
        }
        if budget.exhausted {
            break;
        }
    }
    (x, fx)
}

fn jump_pass(
    f: &dyn Objective,
    net: &NetworkSpec,
    topo: &Topology,
    x: &mut Timetable,
    fx: &mut f64,
    budget: &mut Budget,
    accepted: &mut usize,
) -> bool {
    let Some(r) = f.reference(x) else { return false };
    let mut improved = false;
    for (mv, target) in event_targets(net, topo, x, &r) {
        let Move::Coord { l, p, pos } = mv else { continue };
        let (lo, hi) = delta_range(x, net, mv);
        let d = (target - x.pdep[l][p][pos]).clamp(lo, hi);
        if d.abs() < 1e-9 || !budget.take() {
            continue;
        }
        let saved = save(x, mv);
        apply(x, mv, d);
        let v = f.value(x);
        if v < *fx - 1e-12 * fx.abs().max(1.0) {
            *fx = v;
            *accepted += 1;
            improved = true;
        } else {
            restore(x, mv, &saved);
        }
    }
    improved
}

fn perturb(x: &Timetable, net: &NetworkSpec, spread: f64, rng: &mut ChaCha8Rng) -> Timetable {
    let mut y = x.clone();
    for (l, line) in net.lines.iter().enumerate() {
        let amp = spread * line.headway_h;
        let shift = rng.random_range(-amp..=amp);
        let mv = Move::Suffix { l, p: 0 };
        let (lo, hi) = delta_range(&y, net, mv);
        apply(&mut y, mv, shift.clamp(lo, hi));
        for p in 0..y.pdep[l].len() {
            let mv = Move::Column { l, p };
            let d = rng.random_range(-0.5 * amp..=0.5 * amp);
            let (lo, hi) = delta_range(&y, net, mv);
            apply(&mut y, mv, d.clamp(lo, hi));
        }
    }
    y
}

/// Minimizes `f` from `start` (projected first). Restart `r` perturbs the
/// warm start with a stream derived from `seed` and `r`.
pub fn local_search(
    f: &dyn Objective,
    net: &NetworkSpec,
    topo: &Topology,
    start: &Timetable,
    cfg: &SearchConfig,
    seed: u64,
) -> (Timetable, SearchStats) {
    let mut x0 = start.clone();
    x0.project(net);
    let moves = all_moves(net);
    let clock = cfg.time_limit_secs.map(|l| (Instant::now(), l));
    let mut budget = Budget { clock, max_evals: cfg.max_evals, evals: 0, exhausted: false };
    let mut stats = SearchStats::default();
    let f0 = f.value(&x0);
    stats.start_value = f0;
    let (mut best, mut fbest) =
        descend(f, net, topo, cfg, &moves, x0.clone(), f0, &mut budget, &mut stats.accepted_moves);
    stats.restarts_run = 1;
    for r in 1..=cfg.restarts {
        if budget.exhausted {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, r as u64));
        let y = perturb(&x0, net, cfg.restart_spread, &mut rng);
        if !budget.take() {
            break;
        }
        let fy = f.value(&y);
        let (y, fy) = descend(f, net, topo, cfg, &moves, y, fy, &mut budget, &mut stats.accepted_moves);
        stats.restarts_run += 1;
        if fy < fbest {
            best = y;
            fbest = fy;
        }
    }
    stats.evaluations = budget.evals + 1;
    stats.best = fbest;
    stats.stopped_early = budget.exhausted;
    (best, stats)
}

//! Problem-driven scenario reduction: cross-evaluate single-scenario optima,
//! then pick representatives by an exactly solved clustering problem.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_with, Mode};
use crate::network::{NetworkSpec, Topology};
use crate::optimize::{solve_deterministic, SearchConfig};
use crate::scenario::{Provenance, ScenarioSet};

/// `v[i][j]`: cost of scenario `j` under the timetable optimized for scenario `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VMatrix {
    pub v: Vec<Vec<f64>>,
}

impl VMatrix {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// Clustering distance of scenario `j` to representative `i`: how far the
    /// representative's self-optimized cost is from `j`'s cost under the
    /// representative's timetable.
    pub fn dist(&self, j: usize, i: usize) -> f64 {
        (self.v[i][j] - self.v[i][i]).abs()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let n = self.n();
        let mut header = vec!["timetable_of".to_string()];
        header.extend((0..n).map(|j| format!("scenario_{j}")));
        w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
        for (i, row) in self.v.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Ascending scenario indices.
    pub representatives: Vec<usize>,
    /// assignment[j] is the representative scenario index serving `j`.
    pub assignment: Vec<usize>,
    /// Mean over all scenarios of the distance to the assigned representative.
    pub error: f64,
    /// Probability mass per representative, aligned with `representatives`.
    pub reduced_probabilities: Vec<f64>,
}

/// Settings for [`build_v_matrix`] and [`reduce`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub search: SearchConfig,
    /// Evaluator used for the cross-evaluation; the simplified model by default.
    pub mode: Mode,
    pub seed: u64,
    /// Largest subset count enumerated exhaustively.
    pub enumeration_limit: u64,
    pub time_limit_secs: Option<f64>,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            search: SearchConfig::light(),
            mode: Mode::Sdb,
            seed: 0,
            enumeration_limit: 1_000_000,
            time_limit_secs: None,
        }
    }
}

/// Default representative count: ceil(3% of the sample), at least one.
pub fn default_m(n: usize) -> usize {
    ((0.03 * n as f64).ceil() as usize).clamp(1, n.max(1))
}

pub fn build_v_matrix(set: &ScenarioSet, net: &NetworkSpec, cfg: &ReductionConfig) -> Result<VMatrix> {
    if set.is_empty() {
        return Err(Error::Validation("scenario set is empty".into()));
    }
    let topo = Topology::build(net)?;
    let n = set.len();
    let rows: Vec<Result<Vec<f64>>> = crate::par::map_range(n, |i| {
        let (tt, _) = solve_deterministic(&set.scenarios[i], net, cfg.mode, &cfg.search, cfg.seed)?;
        (0..n).map(|j| Ok(evaluate_with(&topo, &tt, &set.scenarios[j], net, cfg.mode)?.total())).collect()
    });
    Ok(VMatrix { v: rows.into_iter().collect::<Result<_>>()? })
}

fn n_choose_k(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

/// Sum over scenarios of the distance to the nearest open representative.
fn subset_cost(v: &VMatrix, reps: &[usize]) -> f64 {
    (0..v.n()).map(|j| reps.iter().map(|&i| v.dist(j, i)).fold(f64::INFINITY, f64::min)).sum()
}

fn finish(v: &VMatrix, reps: Vec<usize>, probability: &[f64]) -> Clustering {
    let n = v.n();
    let assignment: Vec<usize> = (0..n)
        .map(|j| {
            if reps.contains(&j) {
                return j;
            }
            let mut best = reps[0];
            for &i in &reps[1..] {
                if v.dist(j, i) < v.dist(j, best) {
                    best = i;
                }
            }
            best
        })
        .collect();
    let error = (0..n).map(|j| v.dist(j, assignment[j])).sum::<f64>() / n as f64;
    let reduced_probabilities =
        reps.iter().map(|&r| (0..n).filter(|&j| assignment[j] == r).map(|j| probability[j]).sum()).collect();
    Clustering { representatives: reps, assignment, error, reduced_probabilities }
}

/// Exact minimizer of the mean clustering error with exactly `m`
/// representatives. `probability` only weights the reduced masses.
pub fn solve_clustering(v: &VMatrix, m: usize, probability: &[f64], cfg: &ReductionConfig) -> Result<Clustering> {
    let n = v.n();
    if m == 0 || m > n {
        return Err(Error::Validation(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    if probability.len() != n {
        return Err(Error::Validation("probability length differs from V dimension".into()));
    }
    let reps = if n_choose_k(n, m) <= cfg.enumeration_limit {
        enumerate(v, m)
    } else {
        branch_and_bound(v, m, cfg.time_limit_secs)?
    };
    Ok(finish(v, reps, probability))
}

/// Lexicographic scan of all m-subsets; the first minimum wins.
fn enumerate(v: &VMatrix, m: usize) -> Vec<usize> {
    let n = v.n();
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best = idx.clone();
    let mut best_cost = subset_cost(v, &idx);
    loop {
        let mut k = m;
        while k > 0 && idx[k - 1] == n - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        idx[k - 1] += 1;
        for t in k..m {
            idx[t] = idx[t - 1] + 1;
        }
        let c = subset_cost(v, &idx);
        if c < best_cost {
            best_cost = c;
            best = idx.clone();
        }
    }
}

/// Depth-first search over ascending index subsets. The bound lets every
/// scenario use its nearest candidate among chosen and still-available
/// representatives, which never exceeds the true cost.
fn branch_and_bound(v: &VMatrix, m: usize, time_limit: Option<f64>) -> Result<Vec<usize>> {
    let n = v.n();
    // suffix_min[k][j] = min over i >= k of dist(j, i)
    let mut suffix_min = vec![vec![f64::INFINITY; n]; n + 1];
    for k in (0..n).rev() {
        for j in 0..n {
            suffix_min[k][j] = suffix_min[k + 1][j].min(v.dist(j, k));
        }
    }
    struct S<'a> {
        v: &'a VMatrix,
        m: usize,
        suffix_min: Vec<Vec<f64>>,
        best: Vec<usize>,
        best_cost: f64,
        chosen: Vec<usize>,
        cur_min: Vec<f64>,
        clock: Option<(Instant, f64)>,
        timed_out: bool,
    }
    fn rec(s: &mut S, next: usize) {
        if s.timed_out {
            return;
        }
        if let Some((t, l)) = s.clock {
            if t.elapsed().as_secs_f64() > l {
                s.timed_out = true;
                return;
            }
        }
        let n = s.v.n();
        if s.chosen.len() == s.m {
            let c: f64 = s.cur_min.iter().sum();
            if c < s.best_cost {
                s.best_cost = c;
                s.best = s.chosen.clone();
            }
            return;
        }
        let need = s.m - s.chosen.len();
        for i in next..=(n - need) {
            let bound: f64 = (0..n).map(|j| s.cur_min[j].min(s.suffix_min[i][j])).sum();
            if bound >= s.best_cost {
                continue;
            }
            let saved = s.cur_min.clone();
            for j in 0..n {
                s.cur_min[j] = s.cur_min[j].min(s.v.dist(j, i));
            }
            s.chosen.push(i);
            rec(s, i + 1);
            s.chosen.pop();
            s.cur_min = saved;
        }
    }
    let mut s = S {
        v,
        m,
        suffix_min,
        best: Vec::new(),
        best_cost: f64::INFINITY,
        chosen: Vec::new(),
        cur_min: vec![f64::INFINITY; n],
        clock: time_limit.map(|l| (Instant::now(), l)),
        timed_out: false,
    };
    rec(&mut s, 0);
    if s.timed_out {
        return Err(Error::Size(format!("clustering n={n}, m={m} exceeded the enumeration budget and the time limit")));
    }
    Ok(s.best)
}

/// Outputs of the full reduction pipeline.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub reduced: ScenarioSet,
    pub clustering: Clustering,
    pub vmatrix: VMatrix,
}

pub fn reduce_full(set: &ScenarioSet, m: usize, net: &NetworkSpec, cfg: &ReductionConfig) -> Result<Reduction> {
    set.validate()?;
    let vmatrix = build_v_matrix(set, net, cfg)?;
    let clustering = solve_clustering(&vmatrix, m, &set.probability, cfg)?;
    let reduced = ScenarioSet {
        scenarios: clustering.representatives.iter().map(|&r| set.scenarios[r].clone()).collect(),
        probability: clustering.reduced_probabilities.clone(),
        seed: set.seed,
        provenance: Provenance::Reduced,
    };
    Ok(Reduction { reduced, clustering, vmatrix })
}

/// The `m` representative scenarios weighted by their cluster mass.
pub fn reduce(set: &ScenarioSet, m: usize, net: &NetworkSpec, cfg: &ReductionConfig) -> Result<ScenarioSet> {
    Ok(reduce_full(set, m, net, cfg)?.reduced)
}

/// Writes a clustering summary as JSON.
pub fn write_clustering(c: &Clustering, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(c).expect("clustering serializes");
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

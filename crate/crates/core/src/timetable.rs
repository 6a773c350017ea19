//! First-stage decision: timetabled departure times per (line, trip, node).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::scenario::Scenario;

/// Tolerance for floating-point headway checks.
pub const HEADWAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timetable {
    /// [line][trip][position in node_sequence], minutes from horizon start.
    pub pdep: Vec<Vec<Vec<f64>>>,
}

impl Timetable {
    /// Evenly spaced departures at the nominal headway; each later node is
    /// offset by the scenario's mean segment running time plus `slack`.
    pub fn nominal(net: &NetworkSpec, scenario: &Scenario, slack: f64) -> Self {
        let pdep = net
            .lines
            .iter()
            .enumerate()
            .map(|(l, line)| {
                let trips = net.trips(l);
                let segs = line.node_sequence.len() - 1;
                let mean_rt: Vec<f64> = (0..segs)
                    .map(|s| scenario.running_time[l].iter().map(|t| t[s]).sum::<f64>() / trips as f64)
                    .collect();
                let first = (0.5 * line.headway_h).min(line.headway_max);
                (0..trips)
                    .map(|p| {
                        let mut t = first + p as f64 * line.headway_h;
                        let mut row = vec![t];
                        for rt in &mean_rt {
                            t += rt + slack;
                            row.push(t);
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        Timetable { pdep }
    }

    pub fn check_shape(&self, net: &NetworkSpec) -> Result<()> {
        if self.pdep.len() != net.lines.len() {
            return Err(Error::Validation("timetable line count differs from network".into()));
        }
        for (l, line) in net.lines.iter().enumerate() {
            if self.pdep[l].len() != net.trips(l) || self.pdep[l].iter().any(|r| r.len() != line.node_sequence.len()) {
                return Err(Error::Validation(format!(
                    "timetable shape differs from network for line {}",
                    line.line_id
                )));
            }
        }
        Ok(())
    }

    /// Checks the first-departure cap and the headway band at every node.
    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        self.check_shape(net)?;
        for (l, line) in net.lines.iter().enumerate() {
            let rows = &self.pdep[l];
            if rows[0][0] > line.headway_max + HEADWAY_TOL {
                return Err(Error::Validation(format!(
                    "line {}: first terminal departure {} exceeds headway_max {}",
                    line.line_id, rows[0][0], line.headway_max
                )));
            }
            for pos in 0..line.node_sequence.len() {
                for p in 1..rows.len() {
                    let gap = rows[p][pos] - rows[p - 1][pos];
                    if gap < line.headway_min - HEADWAY_TOL || gap > line.headway_max + HEADWAY_TOL {
                        return Err(Error::Validation(format!(
                            "line {} trip {} node {}: headway {gap} outside [{}, {}]",
                            line.line_id,
                            p + 1,
                            line.node_sequence[pos],
                            line.headway_min,
                            line.headway_max
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Feasible interval of one coordinate with all others fixed.
    pub fn interval(&self, net: &NetworkSpec, l: usize, p: usize, pos: usize) -> (f64, f64) {
        let line = &net.lines[l];
        let rows = &self.pdep[l];
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        if p == 0 && pos == 0 {
            hi = line.headway_max;
        }
        if p > 0 {
            lo = f64::max(lo, rows[p - 1][pos] + line.headway_min);
            hi = hi.min(rows[p - 1][pos] + line.headway_max);
        }
        if p + 1 < rows.len() {
            lo = lo.max(rows[p + 1][pos] - line.headway_max);
            hi = hi.min(rows[p + 1][pos] - line.headway_min);
        }
        (lo, hi)
    }

    /// Sequential clipping in trip order onto the feasible polytope.
    pub fn project(&mut self, net: &NetworkSpec) {
        for (l, line) in net.lines.iter().enumerate() {
            let rows = &mut self.pdep[l];
            for pos in 0..line.node_sequence.len() {
                let first = &mut rows[0][pos];
                *first = first.max(0.0);
                if pos == 0 {
                    *first = first.min(line.headway_max);
                }
                for p in 1..rows.len() {
                    let prev = rows[p - 1][pos];
                    rows[p][pos] = rows[p][pos].clamp(prev + line.headway_min, prev + line.headway_max);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.pdep.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.pdep.iter().flatten().flatten().copied().collect()
    }

    /// Same shape as `self`, values from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Timetable {
        let mut it = flat.iter().copied();
        let pdep = self
            .pdep
            .iter()
            .map(|trips| trips.iter().map(|row| row.iter().map(|_| it.next().expect("length")).collect()).collect())
            .collect();
        Timetable { pdep }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("timetable serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

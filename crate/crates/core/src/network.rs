//! Static network description: lines, transfer nodes, transfer pairs and
//! global model parameters, plus the line-oriented config format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrequencyClass {
    HighFrequency,
    LowFrequency,
}

impl FrequencyClass {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "HighFrequency" => Some(FrequencyClass::HighFrequency),
            "LowFrequency" => Some(FrequencyClass::LowFrequency),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            FrequencyClass::HighFrequency => "HighFrequency",
            FrequencyClass::LowFrequency => "LowFrequency",
        }
    }
}

/// One bus line. Headways in minutes, per-passenger times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub line_id: String,
    pub headway_h: f64,
    pub headway_min: f64,
    pub headway_max: f64,
    pub frequency_class: FrequencyClass,
    /// Terminal first, then the transfer nodes served in order.
    pub node_sequence: Vec<String>,
    pub boarding_time_bt: f64,
    pub alighting_time_at: f64,
    pub door_time: f64,
}

impl LineSpec {
    /// Boarding time in minutes per passenger.
    pub fn bt(&self) -> f64 {
        self.boarding_time_bt / 60.0
    }

    /// Alighting time in minutes per passenger.
    pub fn at(&self) -> f64 {
        self.alighting_time_at / 60.0
    }

    pub fn is_high_frequency(&self) -> bool {
        self.frequency_class == FrequencyClass::HighFrequency
    }

    /// Position of `node` in the sequence, excluding the terminal.
    pub fn stop_position(&self, node: &str) -> Option<usize> {
        self.node_sequence.iter().skip(1).position(|n| n == node).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPairSpec {
    pub node: String,
    pub feeder_line: String,
    pub connecting_line: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub c_tw: f64,
    pub c_vt: f64,
    pub c_dt: f64,
    pub c_dt_in_vehicle: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { c_tw: 2.0, c_vt: 1.5, c_dt: 3.27, c_dt_in_vehicle: (3.27 + 1.5) / 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub horizon_t: f64,
    pub lines: Vec<LineSpec>,
    pub transfer_nodes: Vec<String>,
    pub transfer_pairs: Vec<TransferPairSpec>,
    pub zone_boundary_frac_1: f64,
    pub zone_boundary_frac_2: f64,
    pub first_group_share_nu: f64,
    pub delay_threshold_aths: f64,
    pub unnecessary_threshold_rths: f64,
    /// Wait charged to groups that miss every trip; `None` means the connecting line's headway.
    pub longwait: Option<f64>,
    pub cost_weights: CostWeights,
}

/// floor(T / h), at least one trip.
pub fn trip_count(line: &LineSpec, horizon_t: f64) -> usize {
    ((horizon_t / line.headway_h).floor() as usize).max(1)
}

impl NetworkSpec {
    pub fn line(&self, id: &str) -> Option<&LineSpec> {
        self.lines.iter().find(|l| l.line_id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.line_id == id)
    }

    pub fn trips(&self, line: usize) -> usize {
        trip_count(&self.lines[line], self.horizon_t)
    }

    pub fn longwait_for(&self, connecting: &LineSpec) -> f64 {
        self.longwait.unwrap_or(connecting.headway_h)
    }

    /// Checks every structural invariant, including that stop evaluation
    /// order is acyclic.
    pub fn validate(&self) -> Result<()> {
        let v = |msg: String| Err(Error::Validation(msg));
        if !(self.horizon_t > 0.0) {
            return v(format!("horizon_T must be positive, got {}", self.horizon_t));
        }
        if self.lines.is_empty() {
            return v("network has no lines".into());
        }
        let mut ids = BTreeSet::new();
        for l in &self.lines {
            if !ids.insert(l.line_id.as_str()) {
                return v(format!("duplicate line id {}", l.line_id));
            }
            let id = &l.line_id;
            if !(l.headway_h > 0.0) || !(l.headway_min > 0.0) {
                return v(format!("line {id}: headway_h and headway_min must be positive"));
            }
            if !(l.headway_min <= l.headway_h && l.headway_h <= l.headway_max) {
                return v(format!(
                    "line {id}: headway_min <= headway_h <= headway_max violated ({} / {} / {})",
                    l.headway_min, l.headway_h, l.headway_max
                ));
            }
            if l.node_sequence.is_empty() {
                return v(format!("line {id}: node_sequence is empty"));
            }
            let uniq: BTreeSet<_> = l.node_sequence.iter().collect();
            if uniq.len() != l.node_sequence.len() {
                return v(format!("line {id}: node_sequence repeats a node"));
            }
            if !(l.boarding_time_bt > 0.0) || !(l.alighting_time_at > 0.0) {
                return v(format!("line {id}: boarding_time_bt and alighting_time_at must be positive"));
            }
            if !(l.door_time >= 0.0) {
                return v(format!("line {id}: door_time must be nonnegative"));
            }
            for n in &l.node_sequence[1..] {
                if !self.transfer_nodes.contains(n) {
                    return v(format!("line {id}: node_sequence entry {n} is not a declared transfer node"));
                }
            }
        }
        let hmax = self.lines.iter().map(|l| l.headway_h).fold(0.0, f64::max);
        if !(self.horizon_t > hmax) {
            return v(format!("horizon_T ({}) must exceed every headway_h (max {hmax})", self.horizon_t));
        }
        let nodes: BTreeSet<_> = self.transfer_nodes.iter().collect();
        if nodes.len() != self.transfer_nodes.len() {
            return v("transfer_nodes repeats a node".into());
        }
        let (f1, f2) = (self.zone_boundary_frac_1, self.zone_boundary_frac_2);
        if !(0.0 < f2 && f2 < f1 && f1 < 1.0) {
            return v(format!("zone_boundary_frac_1/2 must satisfy 0 < frac_2 < frac_1 < 1, got {f1}/{f2}"));
        }
        if !(self.first_group_share_nu > 0.0 && self.first_group_share_nu <= 1.0) {
            return v(format!("first_group_share_nu must lie in (0,1], got {}", self.first_group_share_nu));
        }
        if !(self.delay_threshold_aths >= 0.0) || !(self.unnecessary_threshold_rths >= 0.0) {
            return v("delay_threshold_Aths and unnecessary_threshold_Rths must be nonnegative".into());
        }
        if let Some(w) = self.longwait {
            if !(w > 0.0) {
                return v(format!("longwait must be positive, got {w}"));
            }
        }
        let w = &self.cost_weights;
        for (name, x) in [("c_tw", w.c_tw), ("c_vt", w.c_vt), ("c_dt", w.c_dt), ("c_dt_in_vehicle", w.c_dt_in_vehicle)]
        {
            if !(x > 0.0) {
                return v(format!("cost weight {name} must be positive, got {x}"));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.transfer_pairs {
            let tag = format!("pair {} {} {}", p.node, p.feeder_line, p.connecting_line);
            if p.feeder_line == p.connecting_line {
                return v(format!("{tag}: feeder_line equals connecting_line"));
            }
            if !nodes.contains(&p.node) {
                return v(format!("{tag}: node is not a declared transfer node"));
            }
            for lid in [&p.feeder_line, &p.connecting_line] {
                let Some(l) = self.line(lid) else {
                    return v(format!("{tag}: unknown line {lid}"));
                };
                if l.stop_position(&p.node).is_none() {
                    return v(format!("{tag}: node is absent from line {lid}'s node_sequence"));
                }
            }
            if !seen.insert((&p.node, &p.feeder_line, &p.connecting_line)) {
                return v(format!("{tag}: duplicate transfer pair"));
            }
        }
        Topology::build(self).map(|_| ())
    }
}

/// A feeder group source feeding one (connecting line, stop).
#[derive(Debug, Clone)]
pub struct Incoming {
    pub pair: usize,
    pub feeder_line: usize,
    pub feeder_pos: usize,
}

/// Index structures derived from a validated network.
#[derive(Debug, Clone)]
pub struct Topology {
    pub trips: Vec<usize>,
    /// (line, position) in dependency order; position 0 (terminal) is never listed.
    pub order: Vec<(usize, usize)>,
    /// incoming[line][pos]
    pub incoming: Vec<Vec<Vec<Incoming>>>,
}

impl Topology {
    pub fn build(net: &NetworkSpec) -> Result<Self> {
        let index: HashMap<&str, usize> = net.lines.iter().enumerate().map(|(i, l)| (l.line_id.as_str(), i)).collect();
        let trips = (0..net.lines.len()).map(|l| net.trips(l)).collect();
        let mut incoming: Vec<Vec<Vec<Incoming>>> =
            net.lines.iter().map(|l| vec![Vec::new(); l.node_sequence.len()]).collect();
        let mut deps: BTreeMap<(usize, usize), BTreeSet<(usize, usize)>> = BTreeMap::new();
        for (li, l) in net.lines.iter().enumerate() {
            for pos in 1..l.node_sequence.len() {
                let e = deps.entry((li, pos)).or_default();
                if pos > 1 {
                    e.insert((li, pos - 1));
                }
            }
        }
        for (pi, p) in net.transfer_pairs.iter().enumerate() {
            let lf = index[p.feeder_line.as_str()];
            let lc = index[p.connecting_line.as_str()];
            let fpos = net.lines[lf].stop_position(&p.node).expect("validated");
            let cpos = net.lines[lc].stop_position(&p.node).expect("validated");
            incoming[lc][cpos].push(Incoming { pair: pi, feeder_line: lf, feeder_pos: fpos });
            if fpos > 1 {
                deps.get_mut(&(lc, cpos)).expect("stop exists").insert((lf, fpos - 1));
            }
        }
        let mut order = Vec::with_capacity(deps.len());
        let mut done = BTreeSet::new();
        while order.len() < deps.len() {
            let ready: Vec<_> = deps
                .iter()
                .filter(|(k, d)| !done.contains(*k) && d.iter().all(|x| done.contains(x)))
                .map(|(k, _)| *k)
                .collect();
            if ready.is_empty() {
                return Err(Error::Validation(
                    "transfer pairs create a cyclic dependency between stops; arrivals cannot be ordered".into(),
                ));
            }
            for k in ready {
                done.insert(k);
                order.push(k);
            }
        }
        Ok(Topology { trips, order, incoming })
    }
}

// ---------------------------------------------------------------------------
// Config format
// ---------------------------------------------------------------------------

struct Section {
    kind: String,
    args: Vec<String>,
    line: usize,
    keys: BTreeMap<String, (String, usize)>,
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text, &path.display().to_string())
}

/// Parses the config text; `origin` labels error messages.
pub fn parse_network(text: &str, origin: &str) -> Result<NetworkSpec> {
    let perr = |line: usize, msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(inner) = s.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| perr(ln, "unterminated section header".into()))?;
            let mut parts = inner.split_whitespace().map(str::to_string);
            let kind = parts.next().ok_or_else(|| perr(ln, "empty section header".into()))?;
            let args: Vec<String> = parts.collect();
            let want = match kind.as_str() {
                "global" => 0,
                "line" | "node" => 1,
                "pair" => 3,
                other => return Err(perr(ln, format!("unknown section kind '{other}'"))),
            };
            if args.len() != want {
                return Err(perr(ln, format!("section [{kind}] takes {want} argument(s), got {}", args.len())));
            }
            if sections.iter().any(|x| x.kind == kind && x.args == args) {
                return Err(perr(ln, format!("duplicate section [{}]", inner.trim())));
            }
            sections.push(Section { kind, args, line: ln, keys: BTreeMap::new() });
            continue;
        }
        let (k, val) = s.split_once('=').ok_or_else(|| perr(ln, format!("expected 'key = value', got '{s}'")))?;
        let sec = sections.last_mut().ok_or_else(|| perr(ln, "key outside of any section".into()))?;
        let k = k.trim().to_string();
        if sec.keys.insert(k.clone(), (val.trim().to_string(), ln)).is_some() {
            return Err(perr(ln, format!("duplicate key '{k}'")));
        }
    }

    let num = |sec: &Section, key: &str| -> Result<Option<f64>> {
        match sec.keys.get(key) {
            None => Ok(None),
            Some((v, ln)) => {
                v.parse::<f64>().map(Some).map_err(|_| perr(*ln, format!("key '{key}': '{v}' is not a number")))
            }
        }
    };
    let check_keys = |sec: &Section, allowed: &[&str]| -> Result<()> {
        for (k, (_, ln)) in &sec.keys {
            if !allowed.contains(&k.as_str()) {
                return Err(perr(*ln, format!("unknown key '{k}' in [{}]", sec.kind)));
            }
        }
        Ok(())
    };

    let globals: Vec<&Section> = sections.iter().filter(|s| s.kind == "global").collect();
    let g = match globals.as_slice() {
        [g] => *g,
        [] => return Err(perr(0, "missing [global] section".into())),
        _ => unreachable!("duplicates rejected above"),
    };
    check_keys(
        g,
        &[
            "horizon_T",
            "zone_boundary_frac_1",
            "zone_boundary_frac_2",
            "first_group_share_nu",
            "delay_threshold_Aths",
            "unnecessary_threshold_Rths",
            "longwait",
            "c_tw",
            "c_vt",
            "c_dt",
            "c_dt_in_vehicle",
        ],
    )?;
    let horizon_t = num(g, "horizon_T")?.ok_or_else(|| perr(g.line, "[global] is missing horizon_T".into()))?;
    let dw = CostWeights::default();
    let c_dt = num(g, "c_dt")?.unwrap_or(dw.c_dt);
    let c_vt = num(g, "c_vt")?.unwrap_or(dw.c_vt);
    let cost_weights = CostWeights {
        c_tw: num(g, "c_tw")?.unwrap_or(dw.c_tw),
        c_vt,
        c_dt,
        c_dt_in_vehicle: num(g, "c_dt_in_vehicle")?.unwrap_or((c_dt + c_vt) / 2.0),
    };

    let mut lines = Vec::new();
    let mut transfer_nodes = Vec::new();
    let mut transfer_pairs = Vec::new();
    for sec in &sections {
        match sec.kind.as_str() {
            "node" => {
                check_keys(sec, &[])?;
                transfer_nodes.push(sec.args[0].clone());
            }
            "line" => {
                check_keys(
                    sec,
                    &[
                        "headway_h",
                        "headway_min",
                        "headway_max",
                        "frequency_class",
                        "node_sequence",
                        "boarding_time_bt",
                        "alighting_time_at",
                        "door_time",
                    ],
                )?;
                let id = &sec.args[0];
                let h = num(sec, "headway_h")?
                    .ok_or_else(|| perr(sec.line, format!("[line {id}] is missing headway_h")))?;
                let (fc, fc_ln) = sec
                    .keys
                    .get("frequency_class")
                    .ok_or_else(|| perr(sec.line, format!("[line {id}] is missing frequency_class")))?;
                let frequency_class = FrequencyClass::parse(fc).ok_or_else(|| {
                    perr(*fc_ln, format!("frequency_class must be HighFrequency or LowFrequency, got '{fc}'"))
                })?;
                let (seq, _) = sec
                    .keys
                    .get("node_sequence")
                    .ok_or_else(|| perr(sec.line, format!("[line {id}] is missing node_sequence")))?;
                let node_sequence = seq
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|x| !x.is_empty())
                    .map(str::to_string)
                    .collect();
                lines.push(LineSpec {
                    line_id: id.clone(),
                    headway_h: h,
                    headway_min: num(sec, "headway_min")?.unwrap_or(0.9 * h),
                    headway_max: num(sec, "headway_max")?.unwrap_or(1.1 * h),
                    frequency_class,
                    node_sequence,
                    boarding_time_bt: num(sec, "boarding_time_bt")?.unwrap_or(1.96),
                    alighting_time_at: num(sec, "alighting_time_at")?.unwrap_or(1.12),
                    door_time: num(sec, "door_time")?.unwrap_or(7.43),
                });
            }
            "pair" => {
                check_keys(sec, &[])?;
                transfer_pairs.push(TransferPairSpec {
                    node: sec.args[0].clone(),
                    feeder_line: sec.args[1].clone(),
                    connecting_line: sec.args[2].clone(),
                });
            }
            _ => {}
        }
    }

    let net = NetworkSpec {
        horizon_t,
        lines,
        transfer_nodes,
        transfer_pairs,
        zone_boundary_frac_1: num(g, "zone_boundary_frac_1")?.unwrap_or(0.30),
        zone_boundary_frac_2: num(g, "zone_boundary_frac_2")?.unwrap_or(0.09),
        first_group_share_nu: num(g, "first_group_share_nu")?.unwrap_or(0.8),
        delay_threshold_aths: num(g, "delay_threshold_Aths")?.unwrap_or(1.0),
        unnecessary_threshold_rths: num(g, "unnecessary_threshold_Rths")?.unwrap_or(1.0),
        longwait: num(g, "longwait")?,
        cost_weights,
    };
    net.validate()?;
    Ok(net)
}

/// Writes every field explicitly so the output reparses to an equal spec.
pub fn serialize_network(net: &NetworkSpec) -> String {
    let mut s = String::new();
    let w = &net.cost_weights;
    let _ = writeln!(s, "[global]");
    let _ = writeln!(s, "horizon_T = {}", net.horizon_t);
    let _ = writeln!(s, "zone_boundary_frac_1 = {}", net.zone_boundary_frac_1);
    let _ = writeln!(s, "zone_boundary_frac_2 = {}", net.zone_boundary_frac_2);
    let _ = writeln!(s, "first_group_share_nu = {}", net.first_group_share_nu);
    let _ = writeln!(s, "delay_threshold_Aths = {}", net.delay_threshold_aths);
    let _ = writeln!(s, "unnecessary_threshold_Rths = {}", net.unnecessary_threshold_rths);
    if let Some(lw) = net.longwait {
        let _ = writeln!(s, "longwait = {lw}");
    }
    let _ =
        writeln!(s, "c_tw = {}\nc_vt = {}\nc_dt = {}\nc_dt_in_vehicle = {}", w.c_tw, w.c_vt, w.c_dt, w.c_dt_in_vehicle);
    for n in &net.transfer_nodes {
        let _ = writeln!(s, "\n[node {n}]");
    }
    for l in &net.lines {
        let _ = writeln!(s, "\n[line {}]", l.line_id);
        let _ = writeln!(s, "headway_h = {}", l.headway_h);
        let _ = writeln!(s, "headway_min = {}", l.headway_min);
        let _ = writeln!(s, "headway_max = {}", l.headway_max);
        let _ = writeln!(s, "frequency_class = {}", l.frequency_class.as_str());
        let _ = writeln!(s, "node_sequence = {}", l.node_sequence.join(", "));
        let _ = writeln!(s, "boarding_time_bt = {}", l.boarding_time_bt);
        let _ = writeln!(s, "alighting_time_at = {}", l.alighting_time_at);
        let _ = writeln!(s, "door_time = {}", l.door_time);
    }
    for p in &net.transfer_pairs {
        let _ = writeln!(s, "\n[pair {} {} {}]", p.node, p.feeder_line, p.connecting_line);
    }
    s
}

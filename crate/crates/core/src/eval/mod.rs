//! Second-stage evaluation of a timetable under one scenario.
//!
//! Stops are visited in the network's dependency order. At each stop the
//! connecting line's trips are processed in trip order; every indicator of
//! the transfer/dwell model is computed from its defining inequality, and the
//! only free second-stage choices (transfer buffers) are picked by
//! [`choose_buffer`]-style enumeration over passenger-arrival events.

mod accounting;
mod stop;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LineSpec, NetworkSpec, Topology};
use crate::scenario::Scenario;
use crate::timetable::Timetable;

pub use accounting::{account_costs, CostBreakdown, RawDiagnostics};
pub use stop::{
    choose_buffer, eval_high_freq_stop, eval_low_freq_stop, FeederGroup, StopContext, StopOutcome, TripInput,
    EXACT_SEARCH_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Full model with local-passenger arrival patterns.
    Sm,
    /// Local demand fixed per trip and boarded on arrival.
    Sdb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    H1,
    H2,
    L1,
    L2,
    L3,
    L4,
}

/// Arrival zone of a bus relative to its timetabled departure.
pub fn classify_zone(pdep: f64, aarr: f64, line: &LineSpec, net: &NetworkSpec) -> Zone {
    let slack = pdep - aarr;
    if line.is_high_frequency() {
        return if aarr < pdep { Zone::H1 } else { Zone::H2 };
    }
    let b1 = net.zone_boundary_frac_1 * line.headway_h;
    let b2 = net.zone_boundary_frac_2 * line.headway_h;
    if slack > b1 {
        Zone::L1
    } else if slack > b2 {
        Zone::L2
    } else if slack > 0.0 {
        Zone::L3
    } else {
        Zone::L4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferType {
    Type1,
    Type2,
    Type3,
    SemiType2,
    SemiType3,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferAssignment {
    pub pair: usize,
    pub node: usize,
    pub feeder_line: usize,
    pub feeder_trip: usize,
    pub connecting_line: usize,
    /// `None` is the next-horizon sentinel.
    pub connecting_trip: Option<usize>,
    pub transfer_type: TransferType,
    /// Time the group reaches the connecting stop.
    pub stop_arrival: f64,
    pub ntwait: f64,
    pub demand: f64,
}

/// Everything computed for one (line, trip, stop). Minutes and persons.
///
/// High-frequency stops use `tb1`/`ptb1`/`tbo1`/`dwb1`/`lo1` for their single
/// buffer, `serv3` for early-arrival locals and `serv4` for Type-3 transfers.
/// Low-frequency stops use `serv3` for the first Type-3 wave and the `q`/`g`
/// fields for the later waves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StopEvaluation {
    pub line: usize,
    pub trip: usize,
    pub pos: usize,
    pub zone: Option<Zone>,
    pub aarr: f64,
    pub pdep: f64,
    pub delta: f64,
    pub serv1: f64,
    pub serv2: f64,
    pub serv3: f64,
    pub serv4: f64,
    pub serv5: f64,
    pub servl1: f64,
    pub servl2: f64,
    pub serv2q: f64,
    pub serv3q: f64,
    pub serv2g: f64,
    pub serv3g: f64,
    pub gbd1: f64,
    pub gbd2: f64,
    pub gbd3: f64,
    pub gbd4: f64,
    pub gbd5: f64,
    pub gbdl1: f64,
    pub gbdl2: f64,
    pub gbd2q: f64,
    pub gbd3q: f64,
    pub gbd2g: f64,
    pub gbd3g: f64,
    pub tb1: f64,
    pub tb2: f64,
    pub tb3: f64,
    pub ptb1: f64,
    pub ptb2: f64,
    pub ptb3: f64,
    /// Buffer lower bounds (negated second-wave service).
    pub lo1: f64,
    pub lo2: f64,
    pub lo3: f64,
    pub tbo1: f64,
    pub tbo2: f64,
    pub tbo3: f64,
    pub dwb1: f64,
    pub dwb2: f64,
    pub dwb3: f64,
    pub es1: f64,
    pub es2: f64,
    pub es3: f64,
    /// Cascade time markers, absolute minutes.
    pub markers: Vec<f64>,
    pub dwt_i: f64,
    pub dwt_e: f64,
    pub adep: f64,
    pub tbd: f64,
    pub onboard_arr: f64,
    pub ad: f64,
    pub ivdd_out: f64,
    pub rdiff: f64,
    pub vtd: f64,
    pub ewait: f64,
    pub tewait: f64,
    pub adiff: f64,
    pub total_bd_ew: f64,
    pub gbd_ew: f64,
    pub pdd: f64,
    pub in_vehicle_cost: f64,
    pub delay_out_cost: f64,
    pub delay_in_cost: f64,
    pub transfer_wait_cost: f64,
}

impl StopEvaluation {
    /// Sum of every boarding-demand component.
    pub fn gbd_sum(&self) -> f64 {
        self.gbd1
            + self.gbd2
            + self.gbd3
            + self.gbd4
            + self.gbd5
            + self.gbdl1
            + self.gbdl2
            + self.gbd2q
            + self.gbd3q
            + self.gbd2g
            + self.gbd3g
    }

    /// Sum of every boarding service time.
    pub fn serv_sum(&self) -> f64 {
        self.serv1
            + self.serv2
            + self.serv3
            + self.serv4
            + self.serv5
            + self.servl1
            + self.servl2
            + self.serv2q
            + self.serv3q
            + self.serv2g
            + self.serv3g
    }

    /// (service, demand) pairs that must satisfy serv = b^t·gbd.
    pub fn service_pairs(&self) -> [(f64, f64); 11] {
        [
            (self.serv1, self.gbd1),
            (self.serv2, self.gbd2),
            (self.serv3, self.gbd3),
            (self.serv4, self.gbd4),
            (self.serv5, self.gbd5),
            (self.servl1, self.gbdl1),
            (self.servl2, self.gbdl2),
            (self.serv2q, self.gbd2q),
            (self.serv3q, self.gbd3q),
            (self.serv2g, self.gbd2g),
            (self.serv3g, self.gbd3g),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub traces: Vec<StopEvaluation>,
    pub assignments: Vec<TransferAssignment>,
    pub cost: CostBreakdown,
    /// [line][trip][pos]; at the terminal this is the departure time.
    pub aarr: Vec<Vec<Vec<f64>>>,
    pub adep: Vec<Vec<Vec<f64>>>,
}

impl EvaluationResult {
    pub fn total(&self) -> f64 {
        self.cost.total
    }

    /// Writes one JSON object per (trip, stop).
    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for t in &self.traces {
            serde_json::to_writer(&mut w, t).expect("trace serializes");
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores a timetable under one scenario.
pub fn evaluate(tt: &Timetable, sc: &Scenario, net: &NetworkSpec, mode: Mode) -> Result<EvaluationResult> {
    let topo = Topology::build(net)?;
    evaluate_with(&topo, tt, sc, net, mode)
}

/// [`evaluate`] with a prebuilt topology.
pub fn evaluate_with(
    topo: &Topology,
    tt: &Timetable,
    sc: &Scenario,
    net: &NetworkSpec,
    mode: Mode,
) -> Result<EvaluationResult> {
    tt.check_shape(net)?;
    sc.check_shape(net)?;
    let mut aarr: Vec<Vec<Vec<f64>>> = Vec::with_capacity(net.lines.len());
    let mut adep: Vec<Vec<Vec<f64>>> = Vec::with_capacity(net.lines.len());
    let mut ivdd: Vec<Vec<Vec<f64>>> = Vec::with_capacity(net.lines.len());
    for (l, line) in net.lines.iter().enumerate() {
        let n = line.node_sequence.len();
        let trips = topo.trips[l];
        aarr.push(
            (0..trips)
                .map(|p| {
                    let mut v = vec![0.0; n];
                    v[0] = tt.pdep[l][p][0];
                    v
                })
                .collect(),
        );
        adep.push(
            (0..trips)
                .map(|p| {
                    let mut v = vec![0.0; n];
                    v[0] = tt.pdep[l][p][0];
                    v
                })
                .collect(),
        );
        ivdd.push(
            (0..trips)
                .map(|p| {
                    let mut v = vec![0.0; n];
                    v[0] = sc.initial_onboard[l][p];
                    v
                })
                .collect(),
        );
    }
    let mut traces = Vec::new();
    let mut assignments = Vec::new();
    for &(l, pos) in &topo.order {
        let line = &net.lines[l];
        let seg = pos - 1;
        let trips: Vec<TripInput> = (0..topo.trips[l])
            .map(|p| TripInput {
                aarr: adep[l][p][seg] + sc.running_time[l][p][seg],
                pdep: tt.pdep[l][p][pos],
                ad: sc.alighting[l][p][seg],
                onboard_arr: ivdd[l][p][seg] - sc.net_intermediate[l][p][seg],
                local: if line.is_high_frequency() {
                    sc.local_rate_lambda[l][seg]
                } else {
                    sc.local_total_d[l][p][seg]
                },
            })
            .collect();
        let mut groups = Vec::new();
        for inc in &topo.incoming[l][pos] {
            let fseg = inc.feeder_pos - 1;
            for fp in 0..topo.trips[inc.feeder_line] {
                let arrive = adep[inc.feeder_line][fp][fseg] + sc.running_time[inc.feeder_line][fp][fseg];
                groups.push(FeederGroup {
                    pair: inc.pair,
                    feeder_line: inc.feeder_line,
                    feeder_trip: fp,
                    t: arrive + sc.walking_time[inc.pair],
                    td: sc.transfer_demand[inc.pair][fp],
                });
            }
        }
        let node = net.transfer_nodes.iter().position(|n| *n == line.node_sequence[pos]).expect("validated");
        let ctx = StopContext::new(net, l, pos, node, mode, trips, groups);
        let out = if line.is_high_frequency() { eval_high_freq_stop(&ctx) } else { eval_low_freq_stop(&ctx) };
        for ev in &out.stops {
            aarr[l][ev.trip][pos] = ev.aarr;
            adep[l][ev.trip][pos] = ev.adep;
            ivdd[l][ev.trip][pos] = ev.ivdd_out;
        }
        traces.extend(out.stops);
        assignments.extend(out.assignments);
    }
    let cost = account_costs(&traces, &assignments, net);
    Ok(EvaluationResult { traces, assignments, cost, aarr, adep })
}

/// Arrival time at every position of one trip (the terminal entry is the
/// timetabled departure). Dwell at earlier stops follows `mode`.
pub fn propagate(
    tt: &Timetable,
    sc: &Scenario,
    net: &NetworkSpec,
    mode: Mode,
    line: usize,
    trip: usize,
) -> Result<Vec<f64>> {
    if line >= net.lines.len() || trip >= net.trips(line) {
        return Err(Error::MissingData(format!("no trip {trip} on line index {line}")));
    }
    let r = evaluate(tt, sc, net, mode)?;
    Ok(r.aarr[line][trip].clone())
}

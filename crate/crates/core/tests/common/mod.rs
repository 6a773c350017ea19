//! Shared fixtures for the integration tests: seeded micro-instances and a
//! brute-force evaluator that shares no code with the library's cascade.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transync::network::LineSpec;
use transync::{parse_network, Mode, NetworkSpec, Scenario, Timetable};

/// One node, a feeder line F (at most 2 trips) and a connecting line C (at
/// most 3 trips), with the single transfer pair F -> C at X.
#[derive(Debug, Clone)]
pub struct Micro {
    pub net: NetworkSpec,
    pub tt: Timetable,
    pub sc: Scenario,
}

fn class(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.5) {
        "HighFrequency"
    } else {
        "LowFrequency"
    }
}

pub fn micro(seed: u64) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon: f64 = rng.random_range(30.0..60.0);
    let n_f = rng.random_range(1..=2usize);
    let n_c = rng.random_range(1..=3usize);
    let h_f = horizon / (n_f as f64 + 0.5);
    let h_c = horizon / (n_c as f64 + 0.5);
    let text = format!(
        "[global]\nhorizon_T = {horizon}\nfirst_group_share_nu = {nu}\ndelay_threshold_Aths = {aths}\n\
         unnecessary_threshold_Rths = {rths}\n\
         [line F]\nheadway_h = {h_f}\nfrequency_class = {cf}\nnode_sequence = F0, X\nboarding_time_bt = {bf}\n\
         [line C]\nheadway_h = {h_c}\nfrequency_class = {cc}\nnode_sequence = C0, X\nboarding_time_bt = {bc}\n\
         alighting_time_at = {ac}\n[node X]\n[pair X F C]\n",
        nu = rng.random_range(0.5..0.95),
        aths = rng.random_range(0.0..2.0),
        rths = rng.random_range(0.0..1.0),
        cf = class(&mut rng),
        cc = class(&mut rng),
        bf = rng.random_range(1.0..4.0),
        bc = rng.random_range(1.0..6.0),
        ac = rng.random_range(0.5..3.0),
    );
    let net = parse_network(&text, "micro").expect("micro network parses");
    assert_eq!(net.trips(0), n_f);
    assert_eq!(net.trips(1), n_c);

    let c_run: f64 = rng.random_range(5.0..12.0);
    let c0 = rng.random_range(0.0..h_c);
    let c_pdep: Vec<[f64; 2]> = (0..n_c)
        .map(|q| {
            let t = c0 + q as f64 * h_c;
            [t, t + c_run + rng.random_range(-1.0..3.0)]
        })
        .collect();
    let c_rt: Vec<Vec<f64>> = (0..n_c).map(|_| vec![c_run + rng.random_range(-3.0..3.0)]).collect();

    let walk: f64 = rng.random_range(0.5..3.0);
    let f0 = rng.random_range(0.0..h_f);
    let mut f_pdep = Vec::new();
    let mut f_rt = Vec::new();
    for p in 0..n_f {
        let dep = f0 + p as f64 * h_f;
        let q = rng.random_range(0..n_c);
        // Land the group near a connecting departure so buffers matter.
        let target = c_pdep[q][1] + rng.random_range(-4.0..3.0);
        let rt = (target - walk - dep).max(0.5);
        f_pdep.push([dep, dep + rt + 0.5]);
        f_rt.push(vec![rt]);
    }

    let lines = [&net.lines[0], &net.lines[1]];
    let n = [n_f, n_c];
    let per_trip = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, l: usize| -> Vec<Vec<f64>> {
        (0..n[l]).map(|_| vec![rng.random_range(lo..hi)]).collect()
    };
    let mut sc = Scenario {
        running_time: vec![f_rt, c_rt],
        walking_time: vec![walk],
        transfer_demand: vec![(0..n_f).map(|_| rng.random_range(1.0..15.0)).collect()],
        alighting: vec![per_trip(&mut rng, 0.0, 10.0, 0), per_trip(&mut rng, 0.0, 10.0, 1)],
        net_intermediate: vec![per_trip(&mut rng, -2.0, 2.0, 0), per_trip(&mut rng, -2.0, 2.0, 1)],
        initial_onboard: vec![
            (0..n_f).map(|_| rng.random_range(10.0..25.0)).collect(),
            (0..n_c).map(|_| rng.random_range(10.0..25.0)).collect(),
        ],
        local_rate_lambda: Vec::new(),
        local_total_d: Vec::new(),
    };
    for (l, line) in lines.iter().enumerate() {
        if line.is_high_frequency() {
            sc.local_rate_lambda.push(vec![rng.random_range(0.1..1.0)]);
            sc.local_total_d.push(vec![vec![0.0]; n[l]]);
        } else {
            sc.local_rate_lambda.push(vec![0.0]);
            sc.local_total_d.push(per_trip(&mut rng, 1.0, 10.0, l));
        }
    }
    let tt = Timetable {
        pdep: vec![f_pdep.iter().map(|r| r.to_vec()).collect(), c_pdep.iter().map(|r| r.to_vec()).collect()],
    };
    Micro { net, tt, sc }
}

struct Trip {
    a: f64,
    p: f64,
    ad: f64,
    onboard: f64,
    local: f64,
}

struct Group {
    t: f64,
    td: f64,
}

/// The stop of line `l` at its single transfer node.
struct Stop<'a> {
    line: &'a LineSpec,
    net: &'a NetworkSpec,
    mode: Mode,
    trips: Vec<Trip>,
    groups: Vec<Group>,
}

fn stop_of<'a>(m: &'a Micro, l: usize, mode: Mode) -> Stop<'a> {
    let line = &m.net.lines[l];
    let trips = (0..m.net.trips(l))
        .map(|p| Trip {
            a: m.tt.pdep[l][p][0] + m.sc.running_time[l][p][0],
            p: m.tt.pdep[l][p][1],
            ad: m.sc.alighting[l][p][0],
            onboard: m.sc.initial_onboard[l][p] - m.sc.net_intermediate[l][p][0],
            local: if line.is_high_frequency() { m.sc.local_rate_lambda[l][0] } else { m.sc.local_total_d[l][p][0] },
        })
        .collect();
    let groups = if l == 1 {
        (0..m.net.trips(0))
            .map(|f| Group {
                t: m.tt.pdep[0][f][0] + m.sc.running_time[0][f][0] + m.sc.walking_time[0],
                td: m.sc.transfer_demand[0][f],
            })
            .collect()
    } else {
        Vec::new()
    };
    Stop { line, net: &m.net, mode, trips, groups }
}

/// The unique indicator vector consistent with "group g boards in this wave
/// iff it is still free and reached the stop within [lo, hi]", found by
/// testing every vector.
fn wave(free: &[bool], groups: &[Group], lo: f64, hi: f64) -> Vec<bool> {
    let n = groups.len();
    let mut found = None;
    for mask in 0u32..(1 << n) {
        let pick: Vec<bool> = (0..n).map(|g| mask >> g & 1 == 1).collect();
        let consistent = (0..n).all(|g| pick[g] == (free[g] && groups[g].t >= lo && groups[g].t <= hi));
        if consistent {
            assert!(found.is_none(), "two indicator vectors satisfy the wave constraints");
            found = Some(pick);
        }
    }
    found.expect("some indicator vector satisfies the wave constraints")
}

/// Per-trip running state of one enumerated scenario of buffer choices.
struct Sim<'s, 'a> {
    s: &'s Stop<'a>,
    free: Vec<bool>,
    /// Buffer choice per slot: 0 keeps the bus, g+1 waits for group g.
    choice: &'s [usize],
    slot: usize,
    /// (group, wait) for every transfer of the current trip.
    boarded: Vec<(usize, f64, bool)>,
}

impl Sim<'_, '_> {
    fn absorb(&mut self, lo: f64, hi: f64, a: f64, first: bool) -> f64 {
        let pick = wave(&self.free, &self.s.groups, lo, hi);
        let mut demand = 0.0;
        for (g, take) in pick.into_iter().enumerate() {
            if take {
                self.free[g] = false;
                let wait = if first { a - self.s.groups[g].t } else { 0.0 };
                self.boarded.push((g, wait, first));
                demand += self.s.groups[g].td;
            }
        }
        demand
    }

    /// Next buffer decision; `None` when the choice is not admissible.
    fn buffer(&mut self, marker: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let c = self.choice[self.slot];
        self.slot += 1;
        let tb = if c == 0 {
            0.0
        } else {
            let g = c - 1;
            if !self.free[g] {
                return None;
            }
            self.s.groups[g].t - marker
        };
        if tb < lo || tb > hi {
            return None;
        }
        let mut caught = 0.0;
        for g in 0..self.s.groups.len() {
            if self.free[g] && self.s.groups[g].t - marker == tb {
                self.free[g] = false;
                self.boarded.push((g, 0.0, false));
                caught += self.s.groups[g].td;
            }
        }
        Some((tb, caught))
    }
}

struct Outcome {
    adep: f64,
    gbd: f64,
    serv: f64,
    /// Late-arrival passengers' demand and trip-local overshoot boarding.
    total_bd: f64,
    gbd5: f64,
    late: bool,
}

fn trip_high(sim: &mut Sim, q: usize, prev: f64) -> Option<Outcome> {
    let s = sim.s;
    let tr = &s.trips[q];
    let (a, p, lam) = (tr.a, tr.p, tr.local);
    let bt = s.line.bt();
    let sm = s.mode == Mode::Sm;
    let late = a >= p;
    let delta = if late { 0.0 } else { p - a };
    let locals = if sm { lam * (a - prev).max(0.0) } else { lam * s.line.headway_h };
    let g1 = sim.absorb(f64::NEG_INFINITY, a, a, true) + locals;
    let s1 = bt * g1;
    let g2 = sim.absorb(f64::NEG_INFINITY, a + s1, a, false);
    let s2 = bt * g2;
    let g3 = if sm { lam * delta } else { 0.0 };
    let s3 = bt * g3;
    let alight = tr.ad * s.line.at();
    let tbo = (alight.max(delta) - (s1 + s2 + s3)).max(0.0);
    let (tb, g4) = sim.buffer(a + s1 + s2, -s2, tbo)?;
    let s4 = bt * g4;
    let dwt = (s1 + s2 + s3 + tb.max(0.0) + s4).max(alight);
    let (adep, g5) = if a + dwt <= p {
        (p, 0.0)
    } else {
        let g5 = if sm { lam * (a + dwt - a.max(p)) } else { 0.0 };
        (a + dwt + bt * g5, g5)
    };
    let total_bd = if sm { lam * (p - prev).max(0.0) } else { lam * s.line.headway_h };
    Some(Outcome { adep, gbd: g1 + g2 + g3 + g4 + g5, serv: s1 + s2 + s3 + s4 + bt * g5, total_bd, gbd5: g5, late })
}

fn trip_low(sim: &mut Sim, q: usize) -> Option<Outcome> {
    let s = sim.s;
    let tr = &s.trips[q];
    let (a, p, d) = (tr.a, tr.p, tr.local);
    let bt = s.line.bt();
    let sm = s.mode == Mode::Sm;
    let nu = s.net.first_group_share_nu;
    let b1 = s.net.zone_boundary_frac_1 * s.line.headway_h;
    let b2 = s.net.zone_boundary_frac_2 * s.line.headway_h;
    let slack = p - a;
    // Zone index 1..=4 by how early the bus is.
    let zone = if slack > b1 {
        1
    } else if slack > b2 {
        2
    } else if slack > 0.0 {
        3
    } else {
        4
    };
    let first_locals = if !sm {
        d
    } else {
        match zone {
            1 => 0.0,
            2 => nu * d,
            _ => d,
        }
    };
    let mut gbd = 0.0;
    let mut serv = 0.0;
    let g1 = sim.absorb(f64::NEG_INFINITY, a, a, true) + first_locals;
    let s1 = bt * g1;
    let g2 = sim.absorb(f64::NEG_INFINITY, a + s1, a, false);
    let s2 = bt * g2;
    let budget1 = match zone {
        1 => p - b1 - a,
        2 => p - b2 - a,
        3 => p - a,
        _ => 0.0,
    };
    let (tb1, g3) = sim.buffer(a + s1 + s2, -s2, (budget1 - (s1 + s2)).max(0.0))?;
    let s3 = bt * g3;
    gbd += g1 + g2 + g3;
    serv += s1 + s2 + s3;
    let spill1 = (s1 + s2 + tb1.max(0.0) + s3 - budget1).max(0.0);

    // A later wave opening at `open` with `carried` spill-over and a window
    // of `width` minutes; returns the spill-over past the window.
    let mut later = |sim: &mut Sim, open: f64, carried: f64, width: f64, share: f64| -> Option<f64> {
        let gl = if sm { share * d } else { 0.0 };
        let sl = bt * gl;
        let start = open + carried;
        let gq = sim.absorb(open, start + sl, a, false);
        let sq = bt * gq;
        let (tb, gc) = sim.buffer(start + sl + sq, -sq, (width - (carried + sl + sq)).max(0.0))?;
        let sc = bt * gc;
        gbd += gl + gq + gc;
        serv += sl + sq + sc;
        Some((carried + sl + sq + tb.max(0.0) + sc - width).max(0.0))
    };
    let spill3 = match zone {
        1 => {
            let spill2 = later(sim, p - b1, spill1, b1 - b2, nu)?;
            later(sim, p - b2, spill2, b2, 1.0 - nu)?
        }
        2 => later(sim, p - b2, spill1, b2, 1.0 - nu)?,
        3 => spill1,
        _ => 0.0,
    };
    let alight = tr.ad * s.line.at();
    let adep = if zone == 4 { a + alight.max(s1 + s2 + s3) } else { p + (alight - (p - a)).max(0.0).max(spill3) };
    Some(Outcome { adep, gbd, serv, total_bd: d, gbd5: 0.0, late: zone == 4 })
}

/// Cost of one complete choice vector, or `None` if any choice is
/// inadmissible.
fn simulate(s: &Stop, choice: &[usize], slots: usize) -> Option<f64> {
    let net = s.net;
    let w = net.cost_weights;
    let aths = net.delay_threshold_aths;
    let mut free = vec![true; s.groups.len()];
    let mut prev = s.trips[0].p - s.line.headway_h;
    let mut total = 0.0;
    for q in 0..s.trips.len() {
        let mut sim = Sim { s, free, choice: &choice[q * slots..(q + 1) * slots], slot: 0, boarded: Vec::new() };
        let o = if s.line.is_high_frequency() { trip_high(&mut sim, q, prev)? } else { trip_low(&mut sim, q)? };
        let tr = &s.trips[q];
        let onboard_out = tr.onboard - tr.ad + o.gbd;
        let service = o.serv.max(tr.ad * s.line.at());
        let idle = (o.adep - tr.a - service).max(0.0);
        if idle > 0.0 && idle >= net.unnecessary_threshold_rths {
            total += 0.5 * w.c_vt * onboard_out * idle;
        }
        if o.late {
            let ewait = tr.a - tr.p;
            if ewait >= aths {
                let long_waiters: f64 = sim
                    .boarded
                    .iter()
                    .filter(|(_, wait, first)| *first && *wait > ewait + aths)
                    .map(|(g, _, _)| s.groups[*g].td)
                    .sum();
                total += w.c_dt * (o.total_bd + long_waiters) * ewait;
            }
        } else if o.adep > tr.p && o.adep - tr.p >= aths {
            total += w.c_dt_in_vehicle * (onboard_out - o.gbd5) * (o.adep - tr.p);
        }
        total += sim.boarded.iter().map(|(g, wait, _)| w.c_tw * s.groups[*g].td * wait).sum::<f64>();
        free = sim.free;
        prev = o.adep;
    }
    let longwait = net.longwait.unwrap_or(s.line.headway_h);
    total += s.groups.iter().zip(&free).filter(|(_, f)| **f).map(|(g, _)| w.c_tw * g.td * longwait).sum::<f64>();
    Some(total)
}

/// Minimum stop cost over every buffer choice vector.
fn stop_min(s: &Stop) -> f64 {
    let slots = if s.line.is_high_frequency() { 1 } else { 3 };
    let len = slots * s.trips.len();
    let base = s.groups.len() + 1;
    let combos = base.pow(len as u32);
    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; len];
    for mut code in 0..combos {
        for c in choice.iter_mut() {
            *c = code % base;
            code /= base;
        }
        if let Some(v) = simulate(s, &choice, slots) {
            best = best.min(v);
        }
    }
    best
}

/// Brute-force optimum of the full objective for a micro-instance.
pub fn oracle_total(m: &Micro, mode: Mode) -> f64 {
    (0..m.net.lines.len()).map(|l| stop_min(&stop_of(m, l, mode))).sum()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

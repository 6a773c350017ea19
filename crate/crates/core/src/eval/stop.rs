//! Per-stop cascades for high- and low-frequency connecting lines.

use crate::network::{CostWeights, LineSpec, NetworkSpec};

use super::{classify_zone, Mode, StopEvaluation, TransferAssignment, TransferType, Zone};

/// Trip-cascade runs allowed for the exact joint buffer search at one stop
/// before falling back to one-step rollout.
pub const EXACT_SEARCH_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct TripInput {
    pub aarr: f64,
    pub pdep: f64,
    pub ad: f64,
    pub onboard_arr: f64,
    /// Arrival rate λ (high frequency) or per-trip total D (low frequency).
    pub local: f64,
}

/// Transfer passengers of one feeder trip heading for the connecting line.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederGroup {
    pub pair: usize,
    pub feeder_line: usize,
    pub feeder_trip: usize,
    /// Arrival at the connecting stop (feeder arrival plus walking time).
    pub t: f64,
    pub td: f64,
}

/// Inputs of one connecting line at one stop.
#[derive(Debug, Clone)]
pub struct StopContext<'a> {
    pub line: &'a LineSpec,
    pub line_idx: usize,
    pub pos: usize,
    pub node: usize,
    pub mode: Mode,
    pub trips: Vec<TripInput>,
    /// Sorted by arrival time.
    pub groups: Vec<FeederGroup>,
    net: &'a NetworkSpec,
    bt: f64,
    at: f64,
    b1: f64,
    b2: f64,
    w: CostWeights,
    longwait: f64,
}

impl<'a> StopContext<'a> {
    pub fn new(
        net: &'a NetworkSpec,
        line_idx: usize,
        pos: usize,
        node: usize,
        mode: Mode,
        trips: Vec<TripInput>,
        mut groups: Vec<FeederGroup>,
    ) -> Self {
        let line = &net.lines[line_idx];
        groups.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.pair.cmp(&b.pair)).then(a.feeder_trip.cmp(&b.feeder_trip)));
        StopContext {
            line,
            line_idx,
            pos,
            node,
            mode,
            trips,
            groups,
            net,
            bt: line.bt(),
            at: line.at(),
            b1: net.zone_boundary_frac_1 * line.headway_h,
            b2: net.zone_boundary_frac_2 * line.headway_h,
            w: net.cost_weights,
            longwait: net.longwait_for(line),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StopOutcome {
    pub stops: Vec<StopEvaluation>,
    pub assignments: Vec<TransferAssignment>,
    /// Weighted cost attributable to this stop, missed transfers included.
    pub cost: f64,
}

/// Picks the buffer from `{0} ∪ offsets` clipped to `[lower, upper]` that
/// minimizes `cost`; ties go to the smaller buffer.
pub fn choose_buffer(offsets: &[f64], lower: f64, upper: f64, mut cost: impl FnMut(f64) -> f64) -> f64 {
    let mut cands = vec![0.0];
    for &o in offsets {
        let c = o.clamp(lower, upper);
        if !cands.contains(&c) {
            cands.push(c);
        }
    }
    cands.sort_by(|a, b| a.max(0.0).total_cmp(&b.max(0.0)).then(a.abs().total_cmp(&b.abs())));
    let mut best = cands[0];
    let mut best_cost = cost(best);
    for &c in &cands[1..] {
        let v = cost(c);
        if v < best_cost {
            best = c;
            best_cost = v;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Carry {
    assigned: Vec<bool>,
    prev_adep: f64,
}

/// Buffer values for successive decision points; unscripted points use 0.
#[derive(Debug, Default)]
struct Script {
    vals: Vec<f64>,
    /// In-window event offsets offered at each point.
    seen: Vec<Vec<f64>>,
}

impl Script {
    fn with(vals: Vec<f64>) -> Self {
        Script { vals, seen: Vec::new() }
    }

    fn pick(&mut self, offsets: Vec<f64>) -> f64 {
        let k = self.seen.len();
        self.seen.push(offsets);
        self.vals.get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
struct TripRun {
    ev: StopEvaluation,
    assigns: Vec<(usize, TransferType, f64)>,
    cost: f64,
    carry: Carry,
    seen: Vec<Vec<f64>>,
}

type Runner = fn(&StopContext, usize, &Carry, &mut Script) -> TripRun;

/// Mutable state of one trip's cascade.
struct TripState<'c, 'a> {
    ctx: &'c StopContext<'a>,
    q: usize,
    assigned: Vec<bool>,
    assigns: Vec<(usize, TransferType, f64)>,
}

impl TripState<'_, '_> {
    /// Assigns every free group with `t` in `[from, to]`; returns their demand.
    fn absorb(&mut self, from: f64, to: f64, kind: TransferType) -> f64 {
        let mut total = 0.0;
        let aarr = self.ctx.trips[self.q].aarr;
        for (g, grp) in self.ctx.groups.iter().enumerate() {
            if !self.assigned[g] && grp.t >= from && grp.t <= to {
                self.assigned[g] = true;
                let wait = if kind == TransferType::Type1 { aarr - grp.t } else { 0.0 };
                self.assigns.push((g, kind, wait));
                total += grp.td;
            }
        }
        total
    }

    /// Type-1 (arrived by `aarr`) then Type-2 (arrived during serv1) demand.
    fn first_wave(&mut self, locals: f64, ev: &mut StopEvaluation) {
        let aarr = self.ctx.trips[self.q].aarr;
        ev.gbd1 = self.absorb(f64::NEG_INFINITY, aarr, TransferType::Type1) + locals;
        ev.serv1 = self.ctx.bt * ev.gbd1;
        ev.gbd2 = self.absorb(f64::NEG_INFINITY, aarr + ev.serv1, TransferType::Type2);
        ev.serv2 = self.ctx.bt * ev.gbd2;
    }

    /// Offers in-window offsets to the script and catches the group(s) whose
    /// arrival equals `marker + tb` exactly. Returns (tb, caught demand).
    fn buffer(&mut self, marker: f64, lo: f64, hi: f64, kind: TransferType, script: &mut Script) -> (f64, f64) {
        let mut offs: Vec<f64> = self
            .ctx
            .groups
            .iter()
            .enumerate()
            .filter(|(g, _)| !self.assigned[*g])
            .map(|(_, grp)| grp.t - marker)
            .filter(|o| *o >= lo && *o <= hi)
            .collect();
        offs.dedup();
        let tb = script.pick(offs);
        let mut caught = 0.0;
        for (g, grp) in self.ctx.groups.iter().enumerate() {
            if !self.assigned[g] && grp.t - marker == tb && tb >= lo && tb <= hi {
                self.assigned[g] = true;
                self.assigns.push((g, kind, 0.0));
                caught += grp.td;
            }
        }
        (tb, caught)
    }
}

fn blank(ctx: &StopContext, q: usize) -> StopEvaluation {
    let tr = &ctx.trips[q];
    StopEvaluation {
        line: ctx.line_idx,
        trip: q,
        pos: ctx.pos,
        aarr: tr.aarr,
        pdep: tr.pdep,
        ad: tr.ad,
        onboard_arr: tr.onboard_arr,
        ..Default::default()
    }
}

/// Onboard update, unnecessary in-vehicle time, delay cases and trip cost.
fn finalize(
    ctx: &StopContext,
    ev: &mut StopEvaluation,
    assigns: &[(usize, TransferType, f64)],
    late: bool,
    total_bd: f64,
) {
    let w = &ctx.w;
    let aths = ctx.net.delay_threshold_aths;
    ev.tbd = ev.gbd_sum();
    ev.ivdd_out = ev.onboard_arr - ev.ad + ev.tbd;
    let service = ev.serv_sum().max(ev.ad * ctx.at);
    ev.rdiff = (ev.adep - ev.aarr - service).max(0.0);
    if ev.rdiff >= ctx.net.unnecessary_threshold_rths && ev.rdiff > 0.0 {
        ev.vtd = ev.ivdd_out;
    }
    ev.in_vehicle_cost = 0.5 * w.c_vt * ev.vtd * ev.rdiff;
    if late {
        ev.ewait = ev.aarr - ev.pdep;
        if ev.ewait >= aths {
            ev.tewait = ev.ewait;
        }
        ev.total_bd_ew = total_bd;
        ev.gbd_ew = assigns
            .iter()
            .filter(|(_, k, wait)| *k == TransferType::Type1 && *wait > ev.ewait + aths)
            .map(|(g, _, _)| ctx.groups[*g].td)
            .sum();
        ev.delay_out_cost = w.c_dt * (ev.total_bd_ew + ev.gbd_ew) * ev.tewait;
    } else if ev.adep > ev.pdep {
        ev.adiff = ev.adep - ev.pdep;
        ev.pdd = ev.ivdd_out - ev.gbd5;
        if ev.adiff >= aths {
            ev.delay_in_cost = w.c_dt_in_vehicle * ev.pdd * ev.adiff;
        }
    }
    ev.transfer_wait_cost = assigns.iter().map(|(g, _, wait)| w.c_tw * ctx.groups[*g].td * wait).sum();
}

fn trip_cost(ev: &StopEvaluation) -> f64 {
    ev.in_vehicle_cost + ev.delay_out_cost + ev.delay_in_cost + ev.transfer_wait_cost
}

fn run_high(ctx: &StopContext, q: usize, carry: &Carry, script: &mut Script) -> TripRun {
    let tr = &ctx.trips[q];
    let (a, p, lam) = (tr.aarr, tr.pdep, tr.local);
    let sm = ctx.mode == Mode::Sm;
    let mut ev = blank(ctx, q);
    let mut st = TripState { ctx, q, assigned: carry.assigned.clone(), assigns: Vec::new() };
    let late = a >= p;
    ev.zone = Some(if late { Zone::H2 } else { Zone::H1 });
    ev.delta = if late { 0.0 } else { p - a };
    let locals = if sm { lam * (a - carry.prev_adep).max(0.0) } else { lam * ctx.line.headway_h };
    st.first_wave(locals, &mut ev);
    ev.gbd3 = if sm { lam * ev.delta } else { 0.0 };
    ev.serv3 = ctx.bt * ev.gbd3;
    let alight = ev.ad * ctx.at;
    ev.dwb1 = alight.max(ev.delta);
    ev.tbo1 = (ev.dwb1 - (ev.serv1 + ev.serv2 + ev.serv3)).max(0.0);
    ev.lo1 = -ev.serv2;
    let marker = a + ev.serv1 + ev.serv2;
    ev.markers = vec![a, marker];
    let (tb, caught) = st.buffer(marker, ev.lo1, ev.tbo1, TransferType::Type3, script);
    ev.tb1 = tb;
    ev.ptb1 = tb.max(0.0);
    ev.gbd4 = caught;
    ev.serv4 = ctx.bt * ev.gbd4;
    ev.dwt_i = (ev.serv1 + ev.serv2 + ev.serv3 + ev.ptb1 + ev.serv4).max(alight);
    ev.markers.push(a + ev.dwt_i);
    if a + ev.dwt_i <= p {
        ev.adep = p;
    } else {
        ev.gbd5 = if sm { lam * (a + ev.dwt_i - a.max(p)) } else { 0.0 };
        ev.serv5 = ctx.bt * ev.gbd5;
        ev.adep = a + ev.dwt_i + ev.serv5;
    }
    let total_bd = if sm { lam * (p - carry.prev_adep).max(0.0) } else { lam * ctx.line.headway_h };
    finalize(ctx, &mut ev, &st.assigns, late, total_bd);
    let cost = trip_cost(&ev);
    let carry = Carry { assigned: st.assigned, prev_adep: ev.adep };
    TripRun { ev, assigns: st.assigns, cost, carry, seen: std::mem::take(&mut script.seen) }
}

fn run_low(ctx: &StopContext, q: usize, carry: &Carry, script: &mut Script) -> TripRun {
    let tr = &ctx.trips[q];
    let (a, p, d) = (tr.aarr, tr.pdep, tr.local);
    let sm = ctx.mode == Mode::Sm;
    let nu = ctx.net.first_group_share_nu;
    let (b1, b2, bt) = (ctx.b1, ctx.b2, ctx.bt);
    let mut ev = blank(ctx, q);
    let mut st = TripState { ctx, q, assigned: carry.assigned.clone(), assigns: Vec::new() };
    let zone = classify_zone(p, a, ctx.line, ctx.net);
    ev.zone = Some(zone);
    ev.delta = (p - a).max(0.0);
    let locals = match (sm, zone) {
        (false, _) => d,
        (true, Zone::L1) => 0.0,
        (true, Zone::L2) => nu * d,
        _ => d,
    };
    st.first_wave(locals, &mut ev);
    ev.dwb1 = match zone {
        Zone::L1 => (p - b1) - a,
        Zone::L2 => (p - b2) - a,
        Zone::L3 => p - a,
        _ => 0.0,
    };
    ev.tbo1 = (ev.dwb1 - (ev.serv1 + ev.serv2)).max(0.0);
    ev.lo1 = -ev.serv2;
    let m1 = a + ev.serv1 + ev.serv2;
    let (tb, caught) = st.buffer(m1, ev.lo1, ev.tbo1, TransferType::Type3, script);
    ev.tb1 = tb;
    ev.ptb1 = tb.max(0.0);
    ev.gbd3 = caught;
    ev.serv3 = bt * ev.gbd3;
    let used1 = ev.serv1 + ev.serv2 + ev.ptb1 + ev.serv3;
    ev.markers = vec![a, m1, a + used1];

    let third_wave = |ev: &mut StopEvaluation, st: &mut TripState, script: &mut Script| {
        let start = (p - b2) + ev.es2;
        ev.gbdl2 = if sm { (1.0 - nu) * d } else { 0.0 };
        ev.servl2 = bt * ev.gbdl2;
        ev.gbd2g = st.absorb(p - b2, start + ev.servl2, TransferType::SemiType2);
        ev.serv2g = bt * ev.gbd2g;
        ev.dwb3 = b2;
        ev.tbo3 = (ev.dwb3 - (ev.es2 + ev.servl2 + ev.serv2g)).max(0.0);
        ev.lo3 = -ev.serv2g;
        let m3 = start + ev.servl2 + ev.serv2g;
        let (tb, caught) = st.buffer(m3, ev.lo3, ev.tbo3, TransferType::SemiType3, script);
        ev.tb3 = tb;
        ev.ptb3 = tb.max(0.0);
        ev.gbd3g = caught;
        ev.serv3g = bt * ev.gbd3g;
        let used3 = ev.es2 + ev.servl2 + ev.serv2g + ev.ptb3 + ev.serv3g;
        ev.es3 = (used3 - ev.dwb3).max(0.0);
        ev.markers.extend([start, m3, (p - b2) + used3]);
    };

    match zone {
        Zone::L1 => {
            ev.es1 = (used1 - ev.dwb1).max(0.0);
            let start = (p - b1) + ev.es1;
            ev.gbdl1 = if sm { nu * d } else { 0.0 };
            ev.servl1 = bt * ev.gbdl1;
            ev.gbd2q = st.absorb(p - b1, start + ev.servl1, TransferType::SemiType2);
            ev.serv2q = bt * ev.gbd2q;
            ev.dwb2 = b1 - b2;
            ev.tbo2 = (ev.dwb2 - (ev.es1 + ev.servl1 + ev.serv2q)).max(0.0);
            ev.lo2 = -ev.serv2q;
            let m2 = start + ev.servl1 + ev.serv2q;
            let (tb, caught) = st.buffer(m2, ev.lo2, ev.tbo2, TransferType::SemiType3, script);
            ev.tb2 = tb;
            ev.ptb2 = tb.max(0.0);
            ev.gbd3q = caught;
            ev.serv3q = bt * ev.gbd3q;
            let used2 = ev.es1 + ev.servl1 + ev.serv2q + ev.ptb2 + ev.serv3q;
            ev.es2 = (used2 - ev.dwb2).max(0.0);
            ev.markers.extend([start, m2, (p - b1) + used2]);
            third_wave(&mut ev, &mut st, script);
        }
        Zone::L2 => {
            ev.es2 = (used1 - ev.dwb1).max(0.0);
            third_wave(&mut ev, &mut st, script);
        }
        Zone::L3 => ev.es3 = (used1 - ev.dwb1).max(0.0),
        _ => {}
    }

    let alight = ev.ad * ctx.at;
    let l4 = zone == Zone::L4;
    let serv_elf = if l4 { ev.serv1 + ev.serv2 + ev.serv3 } else { ev.es3 };
    let alight_budget = if l4 { 0.0 } else { p - a };
    let alight_e = (alight - alight_budget).max(0.0);
    ev.dwt_e = alight_e.max(serv_elf);
    ev.adep = if l4 { a + ev.dwt_e } else { p + ev.dwt_e };
    ev.dwt_i = ev.serv_sum().max(alight);
    ev.markers.push(ev.adep);
    finalize(ctx, &mut ev, &st.assigns, l4, d);
    let cost = trip_cost(&ev);
    let carry = Carry { assigned: st.assigned, prev_adep: ev.adep };
    TripRun { ev, assigns: st.assigns, cost, carry, seen: std::mem::take(&mut script.seen) }
}

fn missed_cost(ctx: &StopContext, carry: &Carry) -> f64 {
    ctx.groups
        .iter()
        .enumerate()
        .filter(|(g, _)| !carry.assigned[*g])
        .map(|(_, grp)| ctx.w.c_tw * grp.td * ctx.longwait)
        .sum()
}

/// Every complete buffer script for trip `q`, events first-to-last, `0` first.
fn trip_leaves(ctx: &StopContext, run: Runner, q: usize, carry: &Carry, runs: &mut usize) -> Vec<TripRun> {
    #[allow(clippy::too_many_arguments)]
    fn expand(
        ctx: &StopContext,
        run: Runner,
        q: usize,
        carry: &Carry,
        script: Vec<f64>,
        done: TripRun,
        runs: &mut usize,
        out: &mut Vec<TripRun>,
    ) {
        let k = script.len();
        let Some(j) = (k..done.seen.len()).find(|&j| !done.seen[j].is_empty()) else {
            out.push(done);
            return;
        };
        let opts = done.seen[j].clone();
        let mut base = script;
        base.resize(j, 0.0);
        let mut zero = base.clone();
        zero.push(0.0);
        expand(ctx, run, q, carry, zero, done, runs, out);
        for o in opts {
            if o == 0.0 {
                continue;
            }
            let mut s = base.clone();
            s.push(o);
            *runs += 1;
            let r = run(ctx, q, carry, &mut Script::with(s.clone()));
            expand(ctx, run, q, carry, s, r, runs, out);
        }
    }
    *runs += 1;
    let first = run(ctx, q, carry, &mut Script::default());
    let mut out = Vec::new();
    expand(ctx, run, q, carry, Vec::new(), first, runs, &mut out);
    out
}

/// Joint optimum over all trips' buffer scripts, or `None` past the budget.
fn solve_exact(
    ctx: &StopContext,
    run: Runner,
    q: usize,
    carry: &Carry,
    runs: &mut usize,
) -> Option<(f64, Vec<TripRun>)> {
    if q == ctx.trips.len() {
        return Some((missed_cost(ctx, carry), Vec::new()));
    }
    let leaves = trip_leaves(ctx, run, q, carry, runs);
    if *runs > EXACT_SEARCH_BUDGET {
        return None;
    }
    let mut best: Option<(f64, Vec<TripRun>)> = None;
    for leaf in leaves {
        let (rest, mut path) = solve_exact(ctx, run, q + 1, &leaf.carry, runs)?;
        let total = leaf.cost + rest;
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            path.push(leaf);
            best = Some((total, path));
        }
    }
    best
}

/// Cost of trips `q..` with every buffer at zero, missed groups included.
fn base_policy_cost(ctx: &StopContext, run: Runner, q: usize, carry: &Carry) -> f64 {
    let mut carry = carry.clone();
    let mut total = 0.0;
    for k in q..ctx.trips.len() {
        let r = run(ctx, k, &carry, &mut Script::default());
        total += r.cost;
        carry = r.carry;
    }
    total + missed_cost(ctx, &carry)
}

/// One-step rollout: each buffer decision compares its candidates by running
/// the rest of this trip and the zero-buffer cascade for later trips.
fn solve_rollout(ctx: &StopContext, run: Runner) -> Vec<TripRun> {
    let mut carry = Carry { assigned: vec![false; ctx.groups.len()], prev_adep: f64::NAN };
    carry.prev_adep = initial_prev_adep(ctx);
    let mut path = Vec::with_capacity(ctx.trips.len());
    for q in 0..ctx.trips.len() {
        let mut vals: Vec<f64> = Vec::new();
        loop {
            let probe = run(ctx, q, &carry, &mut Script::with(vals.clone()));
            let k = vals.len();
            let Some(j) = (k..probe.seen.len()).find(|&j| !probe.seen[j].is_empty()) else {
                carry = probe.carry.clone();
                path.push(probe);
                break;
            };
            vals.resize(j, 0.0);
            let opts = probe.seen[j].clone();
            let (lo, hi) = (opts[0].min(0.0), opts[opts.len() - 1].max(0.0));
            let tb = choose_buffer(&opts, lo, hi, |tb| {
                let mut s = vals.clone();
                s.push(tb);
                let r = run(ctx, q, &carry, &mut Script::with(s));
                r.cost + base_policy_cost(ctx, run, q + 1, &r.carry)
            });
            vals.push(tb);
        }
    }
    path
}

/// Departure of the notional trip before the first: one headway earlier.
fn initial_prev_adep(ctx: &StopContext) -> f64 {
    ctx.trips.first().map_or(0.0, |t| t.pdep - ctx.line.headway_h)
}

fn solve(ctx: &StopContext, run: Runner) -> StopOutcome {
    let carry = Carry { assigned: vec![false; ctx.groups.len()], prev_adep: initial_prev_adep(ctx) };
    let mut runs = 0;
    let path = match solve_exact(ctx, run, 0, &carry, &mut runs) {
        Some((_, mut p)) => {
            p.reverse();
            p
        }
        None => solve_rollout(ctx, run),
    };
    let mut assigned = vec![false; ctx.groups.len()];
    let mut assignments = Vec::with_capacity(ctx.groups.len());
    let mut stops = Vec::with_capacity(path.len());
    let mut cost = 0.0;
    for r in path {
        for &(g, kind, wait) in &r.assigns {
            assigned[g] = true;
            assignments.push(assignment(ctx, g, Some(r.ev.trip), kind, wait));
        }
        cost += r.cost;
        stops.push(r.ev);
    }
    for (g, done) in assigned.iter().enumerate() {
        if !done {
            assignments.push(assignment(ctx, g, None, TransferType::Missed, ctx.longwait));
            cost += ctx.w.c_tw * ctx.groups[g].td * ctx.longwait;
        }
    }
    StopOutcome { stops, assignments, cost }
}

fn assignment(ctx: &StopContext, g: usize, trip: Option<usize>, kind: TransferType, wait: f64) -> TransferAssignment {
    let grp = &ctx.groups[g];
    TransferAssignment {
        pair: grp.pair,
        node: ctx.node,
        feeder_line: grp.feeder_line,
        feeder_trip: grp.feeder_trip,
        connecting_line: ctx.line_idx,
        connecting_trip: trip,
        transfer_type: kind,
        stop_arrival: grp.t,
        ntwait: wait,
        demand: grp.td,
    }
}

/// High-frequency connecting line at one stop: first-eligible Type 1/2
/// assignment, one Type-3 buffer per trip, early locals and overshoot locals.
pub fn eval_high_freq_stop(ctx: &StopContext) -> StopOutcome {
    solve(ctx, run_high)
}

/// Low-frequency connecting line at one stop: zone-dependent cascade of up
/// to three boarding waves, each with its own buffer.
pub fn eval_low_freq_stop(ctx: &StopContext) -> StopOutcome {
    solve(ctx, run_low)
}

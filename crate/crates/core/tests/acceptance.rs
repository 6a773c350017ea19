//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transync::eval::{classify_zone, TransferType, Zone};
use transync::harness::{
    build_timetable, compare_models, compute_vss, emit_report, score, HarnessConfig, Model, ReportFormat,
};
use transync::optimize::{run_ph, PhConfig, SearchConfig};
use transync::reduction::{reduce_full, solve_clustering, ReductionConfig, VMatrix};
use transync::scenario::{mean_scenario, sample_test_set};
use transync::{evaluate, load_network, sample_scenarios, DistributionConfig, Mode, ScenarioSet};

use common::{micro, oracle_total, rel_diff};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

type Outcome = (bool, String);

fn c1_oracle() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let m = micro(seed);
        let got = evaluate(&m.tt, &m.sc, &m.net, Mode::Sm).expect("micro evaluates").total();
        worst = worst.max(rel_diff(got, oracle_total(&m, Mode::Sm)));
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-6 && secs < 60.0, format!("100 micro-instances, max relative gap {worst:.1e}, {secs:.2} s"))
}

#[derive(Default)]
struct Violations {
    buffer: usize,
    conservation: usize,
    totality: usize,
    proportionality: usize,
    gating: usize,
    zones: usize,
}

fn c2_invariants() -> Outcome {
    const TRIALS: u64 = 10_000;
    let mut v = Violations::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    for seed in 0..TRIALS {
        let m = micro(1_000_000 + seed);
        let mode = if seed % 2 == 0 { Mode::Sm } else { Mode::Sdb };
        let r = evaluate(&m.tt, &m.sc, &m.net, mode).expect("micro evaluates");
        let (aths, rths) = (m.net.delay_threshold_aths, m.net.unnecessary_threshold_rths);
        let mut bad = [false; 5];
        for t in &r.traces {
            let line = &m.net.lines[t.line];
            for (lo, tb, ptb, hi) in
                [(t.lo1, t.tb1, t.ptb1, t.tbo1), (t.lo2, t.tb2, t.ptb2, t.tbo2), (t.lo3, t.tb3, t.ptb3, t.tbo3)]
            {
                if tb < lo - 1e-12 || tb > hi + 1e-12 || hi < 0.0 || ptb != tb.max(0.0) {
                    bad[0] = true;
                }
            }
            let arriving = m.sc.initial_onboard[t.line][t.trip] - m.sc.net_intermediate[t.line][t.trip][0];
            if !close(t.onboard_arr, arriving) || !close(t.ivdd_out, t.onboard_arr - t.ad + t.gbd_sum()) {
                bad[1] = true;
            }
            if t.service_pairs().iter().any(|&(s, g)| !close(s, line.bt() * g)) {
                bad[3] = true;
            }
            let gated = (t.tewait == 0.0 || (t.tewait == t.ewait && t.ewait >= aths))
                && (t.delay_in_cost == 0.0 || t.adiff >= aths)
                && (t.vtd == 0.0 || (t.rdiff >= rths && t.rdiff > 0.0))
                && (t.in_vehicle_cost == 0.0 || t.vtd != 0.0);
            if !gated {
                bad[4] = true;
            }
        }
        // Every feeder group appears exactly once, and missed iff unassigned.
        let n_f = m.net.trips(0);
        let mut seen = vec![0usize; n_f];
        for a in &r.assignments {
            seen[a.feeder_trip] += 1;
            if (a.transfer_type == TransferType::Missed) != a.connecting_trip.is_none() || a.ntwait < -1e-12 {
                bad[2] = true;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            bad[2] = true;
        }
        v.buffer += bad[0] as usize;
        v.conservation += bad[1] as usize;
        v.totality += bad[2] as usize;
        v.proportionality += bad[3] as usize;
        v.gating += bad[4] as usize;
    }
    // Zone partition: exactly one zone condition holds and it is the one reported.
    let net = load_network(data("demo.cfg")).expect("demo network");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..TRIALS {
        let line = &net.lines[rng.random_range(0..net.lines.len())];
        let p: f64 = rng.random_range(0.0..100.0);
        let a = p - rng.random_range(-line.headway_h..line.headway_h);
        let slack = p - a;
        let (b1, b2) = (net.zone_boundary_frac_1 * line.headway_h, net.zone_boundary_frac_2 * line.headway_h);
        let conds: Vec<(Zone, bool)> = if line.is_high_frequency() {
            vec![(Zone::H1, a < p), (Zone::H2, a >= p)]
        } else {
            vec![
                (Zone::L1, slack > b1),
                (Zone::L2, slack > b2 && slack <= b1),
                (Zone::L3, slack > 0.0 && slack <= b2),
                (Zone::L4, slack <= 0.0),
            ]
        };
        let holding: Vec<Zone> = conds.iter().filter(|c| c.1).map(|c| c.0).collect();
        if holding.len() != 1 || holding[0] != classify_zone(p, a, line, &net) {
            v.zones += 1;
        }
    }
    let total = v.buffer + v.conservation + v.totality + v.proportionality + v.gating + v.zones;
    (
        total == 0,
        format!(
            "{TRIALS} trials each; violations: buffer bounds {}, conservation {}, assignment totality {}, \
             serv proportionality {}, threshold gating {}, zone partition {}",
            v.buffer, v.conservation, v.totality, v.proportionality, v.gating, v.zones
        ),
    )
}

/// Mean distance to the nearest representative, minimized over every
/// `m`-subset by plain enumeration.
fn brute_clustering(v: &VMatrix, m: usize) -> f64 {
    let n = v.n();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let reps: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let obj =
            (0..n).map(|j| reps.iter().map(|&i| v.dist(j, i)).fold(f64::INFINITY, f64::min)).sum::<f64>() / n as f64;
        best = best.min(obj);
    }
    best
}

fn c3_clustering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for case in 0..20 {
        let n = rng.random_range(3..=15usize);
        let m = rng.random_range(1..=3usize);
        let v = VMatrix { v: (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1000.0)).collect()).collect() };
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let sum: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / sum).collect();
        let want = brute_clustering(&v, m);
        // Alternate between the enumeration path and branch and bound.
        let cfg =
            ReductionConfig { enumeration_limit: if case % 2 == 0 { 1_000_000 } else { 0 }, ..Default::default() };
        let c = solve_clustering(&v, m, &p, &cfg).expect("clustering solves");
        worst = worst.max((c.error - want).abs());
        let mut reps = c.representatives.clone();
        reps.sort_unstable();
        reps.dedup();
        let feasible = reps.len() == m
            && c.assignment.len() == n
            && c.assignment.iter().all(|a| c.representatives.contains(a))
            && c.representatives.iter().all(|&r| c.assignment[r] == r)
            && (c.reduced_probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9
            && (c.error - (0..n).map(|j| v.dist(j, c.assignment[j])).sum::<f64>() / n as f64).abs() < 1e-9;
        infeasible += !feasible as usize;
    }
    (
        worst <= 1e-9 && infeasible == 0,
        format!("20 matrices, max objective gap {worst:.1e}, infeasible outputs {infeasible}"),
    )
}

fn c4_ph() -> Outcome {
    let net = load_network(data("demo.cfg")).expect("demo network");
    let dists = DistributionConfig::load(data("demo_dists.toml")).expect("demo dists");
    let search = SearchConfig::default();
    let one = sample_scenarios(&net, &dists, 1, 11).expect("sample");
    let r1 = run_ph(&one, &net, &PhConfig::default(), &search, 11).expect("ph on one scenario");
    let single_ok = r1.converged && r1.iterations.len() == 2 && r1.iterations[1].dispersion <= 1e-9;

    let sc = one.scenarios[0].clone();
    let same =
        ScenarioSet { scenarios: vec![sc.clone(), sc.clone(), sc], probability: vec![1.0 / 3.0; 3], ..one.clone() };
    let r3 = run_ph(&same, &net, &PhConfig::default(), &search, 11).expect("ph on identical scenarios");
    let identical_ok = r3.converged && r3.iterations.len() == 2 && r3.iterations[1].dispersion <= 1e-9;

    let three = sample_scenarios(&net, &dists, 3, 12).expect("sample");
    let ph = PhConfig { theta: 0.0, k_max: 8, ..PhConfig::default() };
    let r = run_ph(&three, &net, &ph, &search, 12).expect("ph on desk instance");
    let (d0, d8) = (r.iterations[0].dispersion, r.iterations[8].dispersion);
    let ratio = d8 / d0;
    (
        single_ok && identical_ok && ratio <= 0.25,
        format!(
            "single scenario stops at k=1 with dispersion {:.1e}; identical triple {:.1e} at k=1; \
             desk instance dispersion {d0:.2} -> {d8:.2} at k=8 ({:.0}%)",
            r1.iterations.get(1).map_or(f64::NAN, |i| i.dispersion),
            r3.iterations.get(1).map_or(f64::NAN, |i| i.dispersion),
            100.0 * ratio
        ),
    )
}

struct Pipeline {
    vss: f64,
    secs: f64,
}

/// generate 100 -> reduce to 3 -> hedge and polish -> score 100 test scenarios,
/// against the mean-scenario solve.
fn sm_pipeline(seed: u64) -> Pipeline {
    let t = Instant::now();
    let net = load_network(data("demo.cfg")).expect("demo network");
    let dists = DistributionConfig::load(data("demo_dists.toml")).expect("demo dists");
    let train = sample_scenarios(&net, &dists, 100, seed).expect("train");
    let test = sample_test_set(&net, &dists, 100, seed).expect("test");
    let cfg = HarnessConfig { seed, dists: dists.clone(), ..HarnessConfig::default() };
    let red = reduce_full(&train, cfg.m, &net, &ReductionConfig { seed, ..cfg.reduction.clone() }).expect("reduce");
    let mean = mean_scenario(&net, &dists).expect("mean");
    let (sm, _) = build_timetable(Model::Sm, &net, &red.reduced, &mean, &cfg).expect("sm");
    let secs = t.elapsed().as_secs_f64();
    let (dsm, _) = build_timetable(Model::Dsm, &net, &red.reduced, &mean, &cfg).expect("dsm");
    let vss = compute_vss(&net, &sm, &dsm, &test).expect("vss").vss_percent;
    Pipeline { vss, secs: secs + score_secs(&net, &sm, &test) }
}

fn score_secs(net: &transync::NetworkSpec, tt: &transync::Timetable, test: &ScenarioSet) -> f64 {
    let t = Instant::now();
    score(tt, test, net).expect("score");
    t.elapsed().as_secs_f64()
}

fn c5_vss(runs: &[Pipeline]) -> Outcome {
    let vss: Vec<String> = runs.iter().map(|r| format!("{:+.1}%", r.vss)).collect();
    let floor_ok = runs.iter().all(|r| r.vss >= -1.0);
    let positive = runs.iter().filter(|r| r.vss > 0.0).count();
    (floor_ok && positive >= 3, format!("seeds 1-5 VSS {}; {positive} positive", vss.join(", ")))
}

fn c6_model_detail() -> Outcome {
    let net = load_network(data("demo_low.cfg")).expect("low-frequency network");
    let dists = DistributionConfig::load(data("demo_dists.toml")).expect("demo dists");
    let seed = 1;
    let train = sample_scenarios(&net, &dists, 100, seed).expect("train");
    let test = sample_test_set(&net, &dists, 100, seed).expect("test");
    let cfg = HarnessConfig { seed, dists: dists.clone(), ..HarnessConfig::default() };
    let red = reduce_full(&train, cfg.m, &net, &ReductionConfig { seed, ..cfg.reduction.clone() }).expect("reduce");
    let mean = mean_scenario(&net, &dists).expect("mean");
    let avg = |model: Model| {
        let (tt, _) = build_timetable(model, &net, &red.reduced, &mean, &cfg).expect("build");
        score(&tt, &test, &net).expect("score").iter().map(|r| r.total).sum::<f64>() / test.len() as f64
    };
    let (sm, sdb) = (avg(Model::Sm), avg(Model::Sdb));
    (sm <= 1.05 * sdb, format!("SM {sm:.1} vs SDB {sdb:.1} ({:+.1}%)", 100.0 * (sm - sdb) / sdb))
}

fn c7_replay() -> Outcome {
    let net = load_network(data("demo.cfg")).expect("demo network");
    let dists = DistributionConfig::load(data("demo_dists.toml")).expect("demo dists");
    let dir = tempfile::tempdir().expect("tempdir");
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let train = sample_scenarios(&net, &dists, 12, 21).expect("train");
        let test = sample_test_set(&net, &dists, 10, 21).expect("test");
        let mut cfg = HarnessConfig { seed: 21, dists: dists.clone(), polish_evals: 300, ..HarnessConfig::default() };
        cfg.ph.k_max = 3;
        cfg.reduction.search = SearchConfig { max_evals: 2_000, ..cfg.reduction.search.clone() };
        let report = compare_models(&net, &train, &test, &cfg).expect("compare");
        let json = dir.path().join(format!("{tag}.json"));
        let csv = dir.path().join(format!("{tag}.csv"));
        emit_report(&report, &json, ReportFormat::Json).expect("json");
        emit_report(&report, &csv, ReportFormat::Csv).expect("csv");
        (std::fs::read(json).expect("read"), std::fs::read(csv).expect("read"))
    };
    let a = run("a");
    let b = run("b");
    (a == b, format!("JSON reports {} bytes, CSV {} bytes, identical: {}", a.0.len(), a.1.len(), a == b))
}

fn c8_envelope(runs: &[Pipeline]) -> Outcome {
    let worst = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    (worst < 600.0, format!("slowest full pipeline {worst:.1} s on {threads} thread(s)"))
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; none apply here.
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "oracle equivalence", c1_oracle()),
        (2, "invariant suite", c2_invariants()),
        (3, "clustering exactness", c3_clustering()),
        (4, "hedging sanity", c4_ph()),
    ];
    let runs: Vec<Pipeline> = (1..=5).map(sm_pipeline).collect();
    results.push((5, "VSS direction", c5_vss(&runs)));
    results.push((6, "model-detail direction", c6_model_detail()));
    results.push((7, "determinism and replay", c7_replay()));
    results.push((8, "performance envelope", c8_envelope(&runs)));
    let mut failed = 0;
    for (n, name, (ok, detail)) in &results {
        println!("criterion {n} ({name}): {} : {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += !ok as usize;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

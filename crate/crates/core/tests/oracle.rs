mod common;

use common::{micro, oracle_total, rel_diff};
use transync::{evaluate, Mode};

fn check(mode: Mode, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let m = micro(seed);
        let got = evaluate(&m.tt, &m.sc, &m.net, mode).unwrap().total();
        let want = oracle_total(&m, mode);
        assert!(rel_diff(got, want) <= 1e-6, "seed {seed} {mode:?}: evaluator {got} vs brute force {want}");
    }
}

#[test]
fn full_model_matches_brute_force() {
    check(Mode::Sm, 0..150);
}

#[test]
fn simplified_model_matches_brute_force() {
    check(Mode::Sdb, 1000..1150);
}

#[test]
fn fixtures_exercise_both_line_classes_and_late_groups() {
    let mut classes = std::collections::BTreeSet::new();
    let mut buffered = 0;
    for seed in 0..150 {
        let m = micro(seed);
        classes.insert((m.net.lines[0].is_high_frequency(), m.net.lines[1].is_high_frequency()));
        let r = evaluate(&m.tt, &m.sc, &m.net, Mode::Sm).unwrap();
        buffered += r.traces.iter().filter(|t| t.ptb1 + t.ptb2 + t.ptb3 > 0.0).count();
    }
    assert_eq!(classes.len(), 4);
    assert!(buffered > 5, "only {buffered} positive buffers");
}

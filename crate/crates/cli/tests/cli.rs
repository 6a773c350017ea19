use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_transync");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["generate", "--bogus"]).status.code(), Some(1));
    let net = data("demo_low.cfg");
    let gen = ["generate", "--network", s(&net), "--n", "2", "--out", s(&out)];
    assert_eq!(run(&[&["--threads", "0"], &gen[..]].concat()).status.code(), Some(1));
    let missing = dir.path().join("nope.cfg");
    let bad = run(&["generate", "--network", s(&missing), "--n", "2", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    let broken = dir.path().join("broken.cfg");
    std::fs::write(&broken, "[global]\nhorizon_T = 60\n[bogus]\n").unwrap();
    let bad = run(&["generate", "--network", s(&broken), "--n", "2", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("broken.cfg:3"));
}

#[test]
fn generation_is_reproducible_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let net = data("demo_low.cfg");
    let dists = data("demo_dists.toml");
    for p in [&a, &b] {
        ok(&["--seed", "3", "generate", "--network", s(&net), "--dists", s(&dists), "--n", "4", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "generate");
    assert_eq!(manifest["invocation"]["seed"], 3);
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let net = data("demo_low.cfg");
    let dists = data("demo_dists.toml");
    let (net, dists) = (s(&net), s(&dists));
    std::fs::write(p("search.toml"), "restarts = 1\nmax_evals = 800\n").unwrap();
    std::fs::write(p("harness.toml"), "polish_evals = 100\n[search]\nmax_evals = 800\nrestarts = 1\n").unwrap();

    ok(&["--seed", "2", "generate", "--network", net, "--dists", dists, "--n", "6", "--out", s(&p("train.json"))]);
    ok(&[
        "--seed",
        "2",
        "generate",
        "--network",
        net,
        "--dists",
        dists,
        "--n",
        "5",
        "--test",
        "--out",
        s(&p("test.json")),
    ]);
    ok(&[
        "reduce",
        "--network",
        net,
        "--scenarios",
        s(&p("train.json")),
        "--m",
        "2",
        "--vmatrix-dump",
        s(&p("v.csv")),
        "--clustering-out",
        s(&p("clusters.json")),
        "--out",
        s(&p("reduced.json")),
    ]);
    let reduced: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("reduced.json")).unwrap()).unwrap();
    assert_eq!(reduced["set"]["scenarios"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(p("v.csv")).unwrap().lines().count(), 7);

    ok(&[
        "optimize",
        "--network",
        net,
        "--scenarios",
        s(&p("reduced.json")),
        "--ph",
        "--kmax",
        "2",
        "--polish-evals",
        "100",
        "--search-config",
        s(&p("search.toml")),
        "--history",
        s(&p("hist.csv")),
        "--out",
        s(&p("stoch.json")),
    ]);
    assert!(std::fs::read_to_string(p("hist.csv")).unwrap().lines().count() >= 2);
    ok(&[
        "optimize",
        "--network",
        net,
        "--mean",
        "--dists",
        dists,
        "--search-config",
        s(&p("search.toml")),
        "--out",
        s(&p("det.json")),
    ]);
    ok(&[
        "evaluate",
        "--network",
        net,
        "--timetable",
        s(&p("stoch.json")),
        "--scenarios",
        s(&p("test.json")),
        "--trace",
        s(&p("trace.jsonl")),
        "--out",
        s(&p("eval.csv")),
    ]);
    assert_eq!(std::fs::read_to_string(p("eval.csv")).unwrap().lines().count(), 6);
    assert!(std::fs::read_to_string(p("trace.jsonl")).unwrap().lines().count() > 0);
    ok(&[
        "vss",
        "--network",
        net,
        "--stoch",
        s(&p("stoch.json")),
        "--det",
        s(&p("det.json")),
        "--test",
        s(&p("test.json")),
        "--out",
        s(&p("vss.json")),
    ]);
    ok(&[
        "compare",
        "--network",
        net,
        "--train",
        s(&p("train.json")),
        "--test",
        s(&p("test.json")),
        "--dists",
        dists,
        "--config",
        s(&p("harness.toml")),
        "--m",
        "2",
        "--kmax",
        "2",
        "--csv",
        s(&p("r.csv")),
        "--markdown",
        s(&p("r.md")),
        "--svg-dir",
        s(&p("svg")),
        "--out",
        s(&p("r.json")),
    ]);
    assert!(std::fs::read_to_string(p("r.md")).unwrap().contains("VSS SM/DSM"));
    assert!(std::fs::read_dir(p("svg")).unwrap().count() > 0);
    ok(&["report", "--input", s(&p("r.json")), "--format", "csv", "--out", s(&p("r2.csv"))]);
    assert_eq!(std::fs::read(p("r.csv")).unwrap(), std::fs::read(p("r2.csv")).unwrap());
}

#[test]
fn compare_rejects_a_reused_seed() {
    let dir = tempfile::tempdir().unwrap();
    let net = data("demo_low.cfg");
    let set = dir.path().join("s.json");
    ok(&["generate", "--network", s(&net), "--n", "3", "--out", s(&set)]);
    let out = dir.path().join("r.json");
    let r = run(&["compare", "--network", s(&net), "--train", s(&set), "--test", s(&set), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
}

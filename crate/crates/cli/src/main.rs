//! `transync` command-line pipeline: generate, reduce, optimize, evaluate,
//! compare, vss and report.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use transync::harness::{self, compare_models, compute_vss, emit_report, ComparisonReport, MetricRow, ReportFormat};
use transync::optimize::{polish_in_mode, run_ph, solve_deterministic, PhConfig, SearchConfig};
use transync::reduction::{default_m, reduce_full, write_clustering, ReductionConfig};
use transync::scenario::{mean_scenario, sample_scenarios, sample_test_set};
use transync::{
    evaluate, load_network, load_scenarios, save_scenarios, DistributionConfig, Error, Mode, Result, Timetable,
};

#[derive(Debug, Parser, Serialize)]
#[command(name = "transync", version, about = "Stochastic transfer-synchronized bus timetabling")]
struct Cli {
    /// Base seed for sampling and search.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wall-clock cap per search run, seconds.
    #[arg(long = "time-limit", global = true)]
    time_limit: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum ModeArg {
    Sm,
    Sdb,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Sm => Mode::Sm,
            ModeArg::Sdb => Mode::Sdb,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Sample scenarios from the network's distributions.
    Generate {
        #[arg(long)]
        network: PathBuf,
        /// Distribution TOML; built-in defaults when omitted.
        #[arg(long)]
        dists: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Draw from the held-out test stream of --seed instead.
        #[arg(long)]
        test: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a scenario set down to m representatives.
    Reduce {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        /// Representatives to keep (default ceil(3% of n)).
        #[arg(long)]
        m: Option<usize>,
        /// Build the cross-evaluation matrix with the full model.
        #[arg(long)]
        sm_matrix: bool,
        #[arg(long = "vmatrix-dump")]
        vmatrix_dump: Option<PathBuf>,
        #[arg(long = "clustering-out")]
        clustering_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a timetable by progressive hedging or a single deterministic solve.
    Optimize {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Sm)]
        mode: ModeArg,
        /// Progressive hedging over every scenario in --scenarios.
        #[arg(long)]
        ph: bool,
        /// Solve the mean scenario of --dists instead.
        #[arg(long)]
        mean: bool,
        #[arg(long)]
        dists: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 15)]
        kmax: usize,
        /// Evaluation budget for the final expected-cost polish.
        #[arg(long = "polish-evals", default_value_t = 2000)]
        polish_evals: usize,
        /// Search schedule TOML overriding the defaults.
        #[arg(long = "search-config")]
        search_config: Option<PathBuf>,
        /// CSV of (k, dispersion, per-scenario subproblem value).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a timetable on every scenario of a set.
    Evaluate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        timetable: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Sm)]
        mode: ModeArg,
        /// JSON-lines stop trace of one scenario.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long = "trace-scenario", default_value_t = 0)]
        trace_scenario: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build SM, SDB, DSM and DB timetables and score them on a test set.
    Compare {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        dists: Option<PathBuf>,
        /// Harness TOML overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Directory for SVG plots of costs and dispersion.
        #[arg(long = "svg-dir")]
        svg_dir: Option<PathBuf>,
        /// JSON report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Value of the stochastic solution of one timetable against another.
    Vss {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        stoch: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a JSON comparison report to csv, json or markdown.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Reduce { .. } => "reduce",
            Command::Optimize { .. } => "optimize",
            Command::Evaluate { .. } => "evaluate",
            Command::Compare { .. } => "compare",
            Command::Vss { .. } => "vss",
            Command::Report { .. } => "report",
        }
    }

    fn out(&self) -> &Path {
        match self {
            Command::Generate { out, .. }
            | Command::Reduce { out, .. }
            | Command::Optimize { out, .. }
            | Command::Evaluate { out, .. }
            | Command::Compare { out, .. }
            | Command::Vss { out, .. }
            | Command::Report { out, .. } => out,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    subcommand: &'static str,
    invocation: &'a Cli,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(cli: &Cli) -> Result<()> {
    let path = manifest_path(cli.command.out());
    let m = Manifest { tool_version: env!("CARGO_PKG_VERSION"), subcommand: cli.command.name(), invocation: cli };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_dists(path: &Option<PathBuf>) -> Result<DistributionConfig> {
    path.as_ref().map_or_else(|| Ok(DistributionConfig::default()), DistributionConfig::load)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn search_config(cli: &Cli, path: Option<&PathBuf>) -> Result<SearchConfig> {
    let mut cfg = match path {
        Some(p) => read_toml(p)?,
        None => SearchConfig::default(),
    };
    if cli.time_limit.is_some() {
        cfg.time_limit_secs = cli.time_limit;
    }
    Ok(cfg)
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("scenario,{}\n", MetricRow::COLUMNS.join(","));
    for (i, r) in rows.iter().enumerate() {
        let vals: Vec<String> = r.values().iter().map(f64::to_string).collect();
        s.push_str(&format!("{i},{}\n", vals.join(",")));
    }
    s
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { network, dists, n, test, out } => {
            let net = load_network(network)?;
            let dists = load_dists(dists)?;
            let set = if *test {
                sample_test_set(&net, &dists, *n, cli.seed)?
            } else {
                sample_scenarios(&net, &dists, *n, cli.seed)?
            };
            save_scenarios(&set, out)
        }
        Command::Reduce { network, scenarios, m, sm_matrix, vmatrix_dump, clustering_out, out } => {
            let net = load_network(network)?;
            let set = load_scenarios(scenarios)?;
            let cfg = ReductionConfig {
                seed: cli.seed,
                mode: if *sm_matrix { Mode::Sm } else { Mode::Sdb },
                search: SearchConfig { time_limit_secs: cli.time_limit, ..SearchConfig::light() },
                time_limit_secs: cli.time_limit,
                ..ReductionConfig::default()
            };
            let m = m.unwrap_or_else(|| default_m(set.len()));
            let r = reduce_full(&set, m, &net, &cfg)?;
            if let Some(p) = vmatrix_dump {
                r.vmatrix.write_csv(p)?;
            }
            if let Some(p) = clustering_out {
                write_clustering(&r.clustering, p)?;
            }
            save_scenarios(&r.reduced, out)
        }
        Command::Optimize {
            network,
            scenarios,
            mode,
            ph,
            mean,
            dists,
            rho,
            theta,
            kmax,
            polish_evals,
            search_config: search_path,
            history,
            out,
        } => {
            let net = load_network(network)?;
            let mode: Mode = (*mode).into();
            let search = search_config(cli, search_path.as_ref())?;
            let tt = if *mean {
                if *ph {
                    return Err(Error::Validation("--mean and --ph are mutually exclusive".into()));
                }
                let sc = mean_scenario(&net, &load_dists(dists)?)?;
                solve_deterministic(&sc, &net, mode, &search, cli.seed)?.0
            } else {
                let path = scenarios
                    .as_ref()
                    .ok_or_else(|| Error::Validation("--scenarios is required unless --mean is given".into()))?;
                let set = load_scenarios(path)?;
                if *ph {
                    let cfg = PhConfig { rho: *rho, theta: *theta, k_max: *kmax, mode };
                    let res = run_ph(&set, &net, &cfg, &search, cli.seed)?;
                    if let Some(h) = history {
                        let mut s = String::from("k,dispersion");
                        for i in 0..set.len() {
                            s.push_str(&format!(",value_{i}"));
                        }
                        s.push('\n');
                        for it in &res.iterations {
                            s.push_str(&format!("{},{}", it.k, it.dispersion));
                            for v in &it.subproblem_values {
                                s.push_str(&format!(",{v}"));
                            }
                            s.push('\n');
                        }
                        write(h, &s)?;
                    }
                    polish_in_mode(&res.best, &set, &net, mode, &search, *polish_evals, cli.seed)?.0
                } else if set.len() == 1 {
                    solve_deterministic(&set.scenarios[0], &net, mode, &search, cli.seed)?.0
                } else {
                    return Err(Error::Validation(format!(
                        "{} scenarios given; pass --ph for a stochastic solve or supply a single scenario",
                        set.len()
                    )));
                }
            };
            tt.validate(&net)?;
            tt.save(out)
        }
        Command::Evaluate { network, timetable, scenarios, mode, trace, trace_scenario, out } => {
            let net = load_network(network)?;
            let tt = Timetable::load(timetable)?;
            tt.validate(&net)?;
            let set = load_scenarios(scenarios)?;
            let mode: Mode = (*mode).into();
            let mut rows = Vec::with_capacity(set.len());
            for (i, sc) in set.scenarios.iter().enumerate() {
                let r = evaluate(&tt, sc, &net, mode)?;
                if i == *trace_scenario {
                    if let Some(p) = trace {
                        r.write_trace(p)?;
                    }
                }
                rows.push(MetricRow::from_cost(&r.cost));
            }
            if trace.is_some() && *trace_scenario >= set.len() {
                return Err(Error::Validation(format!("--trace-scenario {trace_scenario} out of range")));
            }
            write(out, &metrics_csv(&rows))
        }
        Command::Compare { network, train, test, dists, config, m, kmax, csv, markdown, svg_dir, out } => {
            let net = load_network(network)?;
            let train = load_scenarios(train)?;
            let test = load_scenarios(test)?;
            let mut cfg: harness::HarnessConfig = match config {
                Some(p) => read_toml(p)?,
                None => harness::HarnessConfig::default(),
            };
            cfg.seed = cli.seed;
            if dists.is_some() {
                cfg.dists = load_dists(dists)?;
            }
            if let Some(m) = m {
                cfg.m = *m;
            }
            if let Some(k) = kmax {
                cfg.ph.k_max = *k;
            }
            if cli.time_limit.is_some() {
                cfg.search.time_limit_secs = cli.time_limit;
                cfg.reduction.search.time_limit_secs = cli.time_limit;
                cfg.reduction.time_limit_secs = cli.time_limit;
            }
            let report = compare_models(&net, &train, &test, &cfg)?;
            emit_report(&report, out, ReportFormat::Json)?;
            if let Some(p) = csv {
                emit_report(&report, p, ReportFormat::Csv)?;
            }
            if let Some(p) = markdown {
                emit_report(&report, p, ReportFormat::Markdown)?;
            }
            if let Some(dir) = svg_dir {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
                write(&dir.join("test_costs.svg"), &svg::cost_histograms(&report))?;
                write(&dir.join("ph_dispersion.svg"), &svg::dispersion_curves(&report))?;
            }
            Ok(())
        }
        Command::Vss { network, stoch, det, test, out } => {
            let net = load_network(network)?;
            let s = Timetable::load(stoch)?;
            let d = Timetable::load(det)?;
            s.validate(&net)?;
            d.validate(&net)?;
            let test = load_scenarios(test)?;
            let v = compute_vss(&net, &s, &d, &test)?;
            println!(
                "VSS {:.3}% (stochastic {:.3}, deterministic {:.3})",
                v.vss_percent, v.stochastic_mean, v.deterministic_mean
            );
            write(out, &serde_json::to_string_pretty(&v).expect("vss serializes"))
        }
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(input).map_err(|e| io_err(input, e))?;
            let report: ComparisonReport =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", input.display())))?;
            emit_report(&report, out, (*format).into())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = write_manifest(&cli) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}

//! Experimental protocol: build four candidate timetables, score them all
//! with the full evaluator on held-out scenarios, and report.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_with, CostBreakdown, Mode};
use crate::network::{NetworkSpec, Topology};
use crate::optimize::{polish_in_mode, run_ph, solve_deterministic, PhConfig, PhIteration, SearchConfig};
use crate::reduction::{reduce_full, Clustering, ReductionConfig};
use crate::scenario::{mean_scenario, DistributionConfig, Scenario, ScenarioSet};
use crate::timetable::Timetable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Representatives kept by the reduction.
    pub m: usize,
    pub reduction: ReductionConfig,
    /// `mode` is overridden per model.
    pub ph: PhConfig,
    pub search: SearchConfig,
    pub polish_evals: usize,
    pub dists: DistributionConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 0,
            m: 3,
            // At desk scale the full-model matrix costs no more than the
            // simplified one and picks representatives that hedge better.
            reduction: ReductionConfig { mode: Mode::Sm, ..ReductionConfig::default() },
            ph: PhConfig::default(),
            search: SearchConfig::default(),
            polish_evals: 2_000,
            dists: DistributionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// Stochastic pipeline on the full model.
    Sm,
    /// Stochastic pipeline on the simplified model.
    Sdb,
    /// Mean-scenario solve on the full model.
    Dsm,
    /// Mean-scenario solve on the simplified model.
    Db,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Sm, Model::Sdb, Model::Dsm, Model::Db];

    pub fn name(self) -> &'static str {
        match self {
            Model::Sm => "SM",
            Model::Sdb => "SDB",
            Model::Dsm => "DSM",
            Model::Db => "DB",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Model::Sm | Model::Dsm => Mode::Sm,
            Model::Sdb | Model::Db => Mode::Sdb,
        }
    }
}

/// The six reported quantities plus ungated diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub total: f64,
    pub transfer_wait_person_min: f64,
    pub delay_min: f64,
    pub delay_person_min: f64,
    pub unnecessary_min: f64,
    pub unnecessary_person_min: f64,
    pub delay_min_ungated: f64,
    pub unnecessary_min_ungated: f64,
}

impl MetricRow {
    pub const LABELS: [&'static str; 6] = [
        "Total objective",
        "Total transfer waiting time * demand",
        "Total delay (min)",
        "Total delay * demand",
        "Total unnecessary in-vehicle time (min)",
        "Total unnecessary in-vehicle time * demand",
    ];

    pub const COLUMNS: [&'static str; 8] = [
        "total",
        "transfer_wait_person_min",
        "delay_min",
        "delay_person_min",
        "unnecessary_min",
        "unnecessary_person_min",
        "delay_min_ungated",
        "unnecessary_min_ungated",
    ];

    pub fn from_cost(c: &CostBreakdown) -> Self {
        MetricRow {
            total: c.total,
            transfer_wait_person_min: c.raw.transfer_wait_person_min,
            delay_min: c.raw.delay_min,
            delay_person_min: c.raw.delay_person_min,
            unnecessary_min: c.raw.unnecessary_min,
            unnecessary_person_min: c.raw.unnecessary_person_min,
            delay_min_ungated: c.raw.delay_min_ungated,
            unnecessary_min_ungated: c.raw.unnecessary_min_ungated,
        }
    }

    pub fn values(&self) -> [f64; 8] {
        [
            self.total,
            self.transfer_wait_person_min,
            self.delay_min,
            self.delay_person_min,
            self.unnecessary_min,
            self.unnecessary_person_min,
            self.delay_min_ungated,
            self.unnecessary_min_ungated,
        ]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        MetricRow {
            total: v[0],
            transfer_wait_person_min: v[1],
            delay_min: v[2],
            delay_person_min: v[3],
            unnecessary_min: v[4],
            unnecessary_person_min: v[5],
            delay_min_ungated: v[6],
            unnecessary_min_ungated: v[7],
        }
    }

    fn mean(rows: &[MetricRow]) -> Self {
        let n = rows.len() as f64;
        let mut acc = [0.0; 8];
        for r in rows {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        MetricRow::from_values(acc.map(|a| a / n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: Model,
    pub timetable: Timetable,
    pub per_scenario: Vec<MetricRow>,
    pub mean: MetricRow,
    /// Empty for the mean-scenario models.
    pub ph_history: Vec<PhIteration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VssResult {
    pub vss_percent: f64,
    pub stochastic_mean: f64,
    pub deterministic_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub train_seed: u64,
    pub test_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub config: HarnessConfig,
    pub clustering: Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metadata: ReportMetadata,
    pub models: Vec<ModelResult>,
    /// Stochastic model against its mean-scenario counterpart (SM/DSM, SDB/DB).
    pub vss: Vec<(String, VssResult)>,
}

impl ComparisonReport {
    pub fn model(&self, m: Model) -> Option<&ModelResult> {
        self.models.iter().find(|r| r.model == m)
    }
}

/// Full-model metrics of `tt` on every scenario of `set`, in order.
pub fn score(tt: &Timetable, set: &ScenarioSet, net: &NetworkSpec) -> Result<Vec<MetricRow>> {
    let topo = Topology::build(net)?;
    let rows: Vec<Result<MetricRow>> = crate::par::map_range(set.len(), |s| {
        Ok(MetricRow::from_cost(&evaluate_with(&topo, tt, &set.scenarios[s], net, Mode::Sm)?.cost))
    });
    rows.into_iter().collect()
}

pub fn compute_vss(net: &NetworkSpec, stoch: &Timetable, det: &Timetable, test: &ScenarioSet) -> Result<VssResult> {
    test.validate()?;
    let mean = |tt: &Timetable| -> Result<f64> {
        Ok(score(tt, test, net)?.iter().map(|r| r.total).sum::<f64>() / test.len() as f64)
    };
    let stochastic_mean = mean(stoch)?;
    let deterministic_mean = mean(det)?;
    if deterministic_mean == 0.0 {
        return Err(Error::Division("deterministic mean cost is zero; VSS undefined".into()));
    }
    Ok(VssResult {
        vss_percent: 100.0 * (deterministic_mean - stochastic_mean) / deterministic_mean,
        stochastic_mean,
        deterministic_mean,
    })
}

/// One model's timetable: progressive hedging on `reduced` then polishing
/// for the stochastic models, a single solve on `mean` for the others.
/// Returns the hedging history (empty for the deterministic models).
pub fn build_timetable(
    model: Model,
    net: &NetworkSpec,
    reduced: &ScenarioSet,
    mean: &Scenario,
    cfg: &HarnessConfig,
) -> Result<(Timetable, Vec<PhIteration>)> {
    let mode = model.mode();
    match model {
        Model::Sm | Model::Sdb => {
            let ph = PhConfig { mode, ..cfg.ph.clone() };
            let res = run_ph(reduced, net, &ph, &cfg.search, cfg.seed)?;
            let (tt, _) = polish_in_mode(&res.best, reduced, net, mode, &cfg.search, cfg.polish_evals, cfg.seed)?;
            Ok((tt, res.iterations))
        }
        Model::Dsm | Model::Db => Ok((solve_deterministic(mean, net, mode, &cfg.search, cfg.seed)?.0, Vec::new())),
    }
}

/// Builds the SM, SDB, DSM and DB timetables and scores each on `test`.
pub fn compare_models(
    net: &NetworkSpec,
    train: &ScenarioSet,
    test: &ScenarioSet,
    cfg: &HarnessConfig,
) -> Result<ComparisonReport> {
    train.validate()?;
    test.validate()?;
    if train.seed == test.seed {
        return Err(Error::Validation("training and test sets share a seed".into()));
    }
    let red_cfg = ReductionConfig { seed: cfg.seed, ..cfg.reduction.clone() };
    let reduction = reduce_full(train, cfg.m.min(train.len()), net, &red_cfg)?;
    let mean = mean_scenario(net, &cfg.dists)?;
    let mut models = Vec::new();
    for model in Model::ALL {
        let (timetable, ph_history) = build_timetable(model, net, &reduction.reduced, &mean, cfg)?;
        let per_scenario = score(&timetable, test, net)?;
        let mean = MetricRow::mean(&per_scenario);
        models.push(ModelResult { model, timetable, per_scenario, mean, ph_history });
    }
    let vss_of = |s: Model, d: Model| -> Result<(String, VssResult)> {
        let sm = models.iter().find(|r| r.model == s).expect("built").mean.total;
        let dm = models.iter().find(|r| r.model == d).expect("built").mean.total;
        if dm == 0.0 {
            return Err(Error::Division(format!("{} mean cost is zero; VSS undefined", d.name())));
        }
        let v = VssResult { vss_percent: 100.0 * (dm - sm) / dm, stochastic_mean: sm, deterministic_mean: dm };
        Ok((format!("{}/{}", s.name(), d.name()), v))
    };
    let vss = vec![vss_of(Model::Sm, Model::Dsm)?, vss_of(Model::Sdb, Model::Db)?];
    Ok(ComparisonReport {
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            train_seed: train.seed,
            test_seed: test.seed,
            n_train: train.len(),
            n_test: test.len(),
            config: cfg.clone(),
            clustering: reduction.clustering,
        },
        models,
        vss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Validation(format!("unknown report format '{s}' (csv, json, markdown)"))),
        }
    }
}

/// CSV: one row per (model, test scenario) plus a `mean` row per model.
/// JSON: the full report. Markdown: six labeled rows per model.
pub fn emit_report(report: &ComparisonReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Markdown => report_markdown(report),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn report_csv(report: &ComparisonReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model", "scenario"];
    header.extend(MetricRow::COLUMNS);
    w.write_record(&header).expect("in-memory write");
    for m in &report.models {
        let rows = m.per_scenario.iter().enumerate().map(|(i, r)| (i.to_string(), r));
        for (label, row) in rows.chain(std::iter::once(("mean".to_string(), &m.mean))) {
            let mut rec = vec![m.model.name().to_string(), label];
            rec.extend(row.values().iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn report_markdown(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let md = &report.metadata;
    let _ = writeln!(s, "# Model comparison\n");
    let _ = writeln!(
        s,
        "Train seed {}, test seed {}, {} training and {} test scenarios, {} representatives.\n",
        md.train_seed,
        md.test_seed,
        md.n_train,
        md.n_test,
        md.clustering.representatives.len()
    );
    let _ = write!(s, "| Metric |");
    for m in &report.models {
        let _ = write!(s, " {} |", m.model.name());
    }
    let _ = write!(s, "\n|---|");
    for _ in &report.models {
        let _ = write!(s, "---:|");
    }
    s.push('\n');
    for (k, label) in MetricRow::LABELS.iter().enumerate() {
        let _ = write!(s, "| {label} |");
        for m in &report.models {
            let _ = write!(s, " {:.2} |", m.mean.values()[k]);
        }
        s.push('\n');
    }
    s.push('\n');
    for (name, v) in &report.vss {
        let _ = writeln!(
            s,
            "VSS {name}: {:.2}% (stochastic {:.2}, deterministic {:.2})",
            v.vss_percent, v.stochastic_mean, v.deterministic_mean
        );
    }
    s
}

/// Reads back a CSV report as (model, scenario label, values).
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<(String, String, MetricRow)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if rec.len() != 10 {
            return Err(Error::Format(format!("{}: expected 10 columns, got {}", path.display(), rec.len())));
        }
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 2]
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number '{}'", path.display(), &rec[k + 2])))?;
        }
        out.push((rec[0].to_string(), rec[1].to_string(), MetricRow::from_values(v)));
    }
    Ok(out)
}

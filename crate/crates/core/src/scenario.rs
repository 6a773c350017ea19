//! Scenario sampling and storage.
//!
//! A [`Scenario`] holds one realization of every random input, indexed by the
//! network's line, pair and trip order. Segment `s` of a line runs from
//! `node_sequence[s]` to `node_sequence[s + 1]`; per-stop quantities are
//! indexed by the segment that ends at the stop.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// [line][trip][segment], minutes.
    pub running_time: Vec<Vec<Vec<f64>>>,
    /// [pair], minutes.
    pub walking_time: Vec<f64>,
    /// [pair][feeder trip], persons.
    pub transfer_demand: Vec<Vec<f64>>,
    /// [line][trip][segment], total alighting at the stop (transfers included).
    pub alighting: Vec<Vec<Vec<f64>>>,
    /// [line][trip][segment], net alightings at untracked stops along the segment.
    pub net_intermediate: Vec<Vec<Vec<f64>>>,
    /// [line][trip], onboard when leaving the terminal.
    pub initial_onboard: Vec<Vec<f64>>,
    /// [line][segment], persons per minute; zero on low-frequency lines.
    pub local_rate_lambda: Vec<Vec<f64>>,
    /// [line][trip][segment], persons; zero on high-frequency lines.
    pub local_total_d: Vec<Vec<Vec<f64>>>,
}

impl Scenario {
    /// Confirms every array matches the network's shape.
    pub fn check_shape(&self, net: &NetworkSpec) -> Result<()> {
        let miss = |what: &str| Err(Error::MissingData(format!("scenario {what} does not match the network")));
        let nl = net.lines.len();
        if self.running_time.len() != nl
            || self.alighting.len() != nl
            || self.net_intermediate.len() != nl
            || self.initial_onboard.len() != nl
            || self.local_rate_lambda.len() != nl
            || self.local_total_d.len() != nl
        {
            return miss("line count");
        }
        for (l, line) in net.lines.iter().enumerate() {
            let trips = net.trips(l);
            let segs = line.node_sequence.len() - 1;
            for arr in [&self.running_time[l], &self.alighting[l], &self.net_intermediate[l], &self.local_total_d[l]] {
                if arr.len() != trips || arr.iter().any(|t| t.len() != segs) {
                    return miss(&format!("per-trip segment data of line {}", line.line_id));
                }
            }
            if self.initial_onboard[l].len() != trips || self.local_rate_lambda[l].len() != segs {
                return miss(&format!("onboard or local rate data of line {}", line.line_id));
            }
        }
        if self.walking_time.len() != net.transfer_pairs.len() || self.transfer_demand.len() != net.transfer_pairs.len()
        {
            return miss("transfer pair count");
        }
        for (p, pair) in net.transfer_pairs.iter().enumerate() {
            let lf = net.line_index(&pair.feeder_line).expect("validated");
            if self.transfer_demand[p].len() != net.trips(lf) {
                return miss("transfer demand trip count");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Sampled,
    Reduced,
    TestSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub probability: Vec<f64>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Validation("scenario set is empty".into()));
        }
        if self.probability.len() != self.scenarios.len() {
            return Err(Error::Validation("probability count differs from scenario count".into()));
        }
        if self.probability.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Validation("every scenario probability must be positive".into()));
        }
        let total: f64 = self.probability.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Closed interval for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

/// Parameters of ln(X) ~ N(mu, sigma²); minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PairOverride {
    pub node: String,
    pub feeder_line: String,
    pub connecting_line: String,
    pub walking: Option<Range>,
    pub transfer_demand: Option<Range>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LineOverride {
    /// One entry per segment.
    pub running: Option<Vec<LogNormalParams>>,
    pub local_rate: Option<Range>,
    pub local_total: Option<Range>,
}

/// Sampling distributions for every scenario input. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionConfig {
    pub running: LogNormalParams,
    pub walking: Range,
    pub transfer_demand: Range,
    pub alighting_extra: Range,
    pub net_intermediate: Range,
    pub initial_onboard: Range,
    pub local_rate: Range,
    pub local_total: Range,
    pub lines: BTreeMap<String, LineOverride>,
    pub pairs: Vec<PairOverride>,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig {
            running: LogNormalParams { mu: 8f64.ln(), sigma: 0.15 },
            walking: Range::new(1.0, 3.0),
            transfer_demand: Range::new(2.0, 10.0),
            alighting_extra: Range::new(0.0, 8.0),
            net_intermediate: Range::new(-3.0, 3.0),
            initial_onboard: Range::new(10.0, 25.0),
            local_rate: Range::new(0.3, 1.0),
            local_total: Range::new(4.0, 15.0),
            lines: BTreeMap::new(),
            pairs: Vec::new(),
        }
    }
}

impl DistributionConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses TOML text; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("distribution config serializes")
    }

    fn running_for(&self, line: &str, seg: usize) -> LogNormalParams {
        self.lines.get(line).and_then(|o| o.running.as_ref()).and_then(|v| v.get(seg).copied()).unwrap_or(self.running)
    }

    fn pair_override(&self, net: &NetworkSpec, pair: usize) -> Option<&PairOverride> {
        let p = &net.transfer_pairs[pair];
        self.pairs
            .iter()
            .find(|o| o.node == p.node && o.feeder_line == p.feeder_line && o.connecting_line == p.connecting_line)
    }

    fn walking_for(&self, net: &NetworkSpec, pair: usize) -> Range {
        self.pair_override(net, pair).and_then(|o| o.walking).unwrap_or(self.walking)
    }

    fn demand_for(&self, net: &NetworkSpec, pair: usize) -> Range {
        self.pair_override(net, pair).and_then(|o| o.transfer_demand).unwrap_or(self.transfer_demand)
    }

    fn local_rate_for(&self, line: &str) -> Range {
        self.lines.get(line).and_then(|o| o.local_rate).unwrap_or(self.local_rate)
    }

    fn local_total_for(&self, line: &str) -> Range {
        self.lines.get(line).and_then(|o| o.local_total).unwrap_or(self.local_total)
    }

    /// Rejects parameters that would produce invalid scenarios.
    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let check_range = |name: &str, r: Range, positive: bool, nonneg: bool| -> Result<()> {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return cfg(format!("{name}: need finite min <= max, got {}..{}", r.min, r.max));
            }
            if positive && !(r.min > 0.0) {
                return cfg(format!("{name}: min must be positive, got {}", r.min));
            }
            if nonneg && r.min < 0.0 {
                return cfg(format!("{name}: min must be nonnegative, got {}", r.min));
            }
            Ok(())
        };
        let check_ln = |name: &str, p: LogNormalParams| -> Result<()> {
            if !p.mu.is_finite() || !(p.sigma >= 0.0) || !p.sigma.is_finite() {
                return cfg(format!("{name}: need finite mu and sigma >= 0, got ({}, {})", p.mu, p.sigma));
            }
            Ok(())
        };
        check_ln("running", self.running)?;
        check_range("walking", self.walking, true, true)?;
        check_range("transfer_demand", self.transfer_demand, false, true)?;
        check_range("alighting_extra", self.alighting_extra, false, true)?;
        check_range("net_intermediate", self.net_intermediate, false, false)?;
        check_range("initial_onboard", self.initial_onboard, false, true)?;
        check_range("local_rate", self.local_rate, false, true)?;
        check_range("local_total", self.local_total, false, true)?;
        for (id, o) in &self.lines {
            let Some(line) = net.line(id) else {
                return cfg(format!("lines.{id}: unknown line"));
            };
            if let Some(r) = &o.running {
                if r.len() != line.node_sequence.len() - 1 {
                    return cfg(format!(
                        "lines.{id}.running: need one entry per segment ({})",
                        line.node_sequence.len() - 1
                    ));
                }
                for p in r {
                    check_ln(&format!("lines.{id}.running"), *p)?;
                }
            }
            if let Some(r) = o.local_rate {
                check_range(&format!("lines.{id}.local_rate"), r, false, true)?;
            }
            if let Some(r) = o.local_total {
                check_range(&format!("lines.{id}.local_total"), r, false, true)?;
            }
        }
        for o in &self.pairs {
            let known = net
                .transfer_pairs
                .iter()
                .any(|p| p.node == o.node && p.feeder_line == o.feeder_line && p.connecting_line == o.connecting_line);
            if !known {
                return cfg(format!("pairs: unknown pair {} {} {}", o.node, o.feeder_line, o.connecting_line));
            }
            if let Some(r) = o.walking {
                check_range("pairs.walking", r, true, true)?;
            }
            if let Some(r) = o.transfer_demand {
                check_range("pairs.transfer_demand", r, false, true)?;
            }
        }
        Ok(())
    }
}

/// Draws one value per input; `Mean` replaces each draw by its expectation.
enum Source<'a> {
    Random(&'a mut ChaCha8Rng),
    Mean,
}

impl Source<'_> {
    fn uniform(&mut self, r: Range) -> f64 {
        match self {
            Source::Random(rng) => r.sample(*rng),
            Source::Mean => r.mean(),
        }
    }

    fn lognormal(&mut self, p: LogNormalParams) -> f64 {
        match self {
            Source::Random(rng) => {
                if p.sigma > 0.0 {
                    LogNormal::new(p.mu, p.sigma).expect("validated").sample(*rng)
                } else {
                    p.mu.exp()
                }
            }
            Source::Mean => p.mean(),
        }
    }
}

fn build(net: &NetworkSpec, d: &DistributionConfig, src: &mut Source) -> Scenario {
    let nl = net.lines.len();
    let mut sc = Scenario {
        running_time: Vec::with_capacity(nl),
        walking_time: Vec::new(),
        transfer_demand: Vec::new(),
        alighting: Vec::with_capacity(nl),
        net_intermediate: Vec::with_capacity(nl),
        initial_onboard: Vec::with_capacity(nl),
        local_rate_lambda: Vec::with_capacity(nl),
        local_total_d: Vec::with_capacity(nl),
    };
    for (l, line) in net.lines.iter().enumerate() {
        let segs = line.node_sequence.len() - 1;
        let trips = net.trips(l);
        sc.running_time.push(
            (0..trips).map(|_| (0..segs).map(|s| src.lognormal(d.running_for(&line.line_id, s))).collect()).collect(),
        );
        let high = line.is_high_frequency();
        let rate = d.local_rate_for(&line.line_id);
        sc.local_rate_lambda.push((0..segs).map(|_| if high { src.uniform(rate) } else { 0.0 }).collect());
        let tot = d.local_total_for(&line.line_id);
        sc.local_total_d
            .push((0..trips).map(|_| (0..segs).map(|_| if high { 0.0 } else { src.uniform(tot) }).collect()).collect());
    }
    for p in 0..net.transfer_pairs.len() {
        sc.walking_time.push(src.uniform(d.walking_for(net, p)));
        let lf = net.line_index(&net.transfer_pairs[p].feeder_line).expect("validated");
        let r = d.demand_for(net, p);
        sc.transfer_demand.push((0..net.trips(lf)).map(|_| src.uniform(r)).collect());
    }
    for (l, line) in net.lines.iter().enumerate() {
        let segs = line.node_sequence.len() - 1;
        let trips = net.trips(l);
        let mut alight = Vec::with_capacity(trips);
        let mut netint = Vec::with_capacity(trips);
        let mut init = Vec::with_capacity(trips);
        for trip in 0..trips {
            let mut a_row = Vec::with_capacity(segs);
            let mut n_row = Vec::with_capacity(segs);
            // Minimum initial load keeping onboard >= alighting at every stop, ignoring boardings.
            let mut need: f64 = 0.0;
            let mut cum = 0.0;
            for s in 0..segs {
                let node = &line.node_sequence[s + 1];
                let transfers: f64 = net
                    .transfer_pairs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.feeder_line == line.line_id && &p.node == node)
                    .map(|(pi, _)| sc.transfer_demand[pi][trip])
                    .sum();
                let ad = transfers + src.uniform(d.alighting_extra);
                let sp = src.uniform(d.net_intermediate);
                cum += sp + ad;
                need = need.max(cum);
                a_row.push(ad);
                n_row.push(sp);
            }
            alight.push(a_row);
            netint.push(n_row);
            init.push(need + src.uniform(d.initial_onboard));
        }
        sc.alighting.push(alight);
        sc.net_intermediate.push(netint);
        sc.initial_onboard.push(init);
    }
    sc
}

/// SplitMix64 finalizer; used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the held-out test set belonging to a training seed.
pub fn test_seed(seed: u64) -> u64 {
    mix_seed(seed, 0x5445_5354_5345_5453)
}

/// Samples `n` equiprobable scenarios. Scenario `i` uses its own ChaCha8
/// stream, so the result does not depend on thread count.
pub fn sample_scenarios(net: &NetworkSpec, dists: &DistributionConfig, n: usize, seed: u64) -> Result<ScenarioSet> {
    sample_with_provenance(net, dists, n, seed, Provenance::Sampled)
}

/// Samples a test set from the seed stream derived by [`test_seed`].
pub fn sample_test_set(
    net: &NetworkSpec,
    dists: &DistributionConfig,
    n: usize,
    train_seed: u64,
) -> Result<ScenarioSet> {
    sample_with_provenance(net, dists, n, test_seed(train_seed), Provenance::TestSet)
}

fn sample_with_provenance(
    net: &NetworkSpec,
    dists: &DistributionConfig,
    n: usize,
    seed: u64,
    provenance: Provenance,
) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(Error::Config("scenario count must be at least 1".into()));
    }
    dists.validate(net)?;
    let one = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
        build(net, dists, &mut Source::Random(&mut rng))
    };
    let scenarios: Vec<Scenario> = crate::par::map_range(n, one);
    Ok(ScenarioSet { scenarios, probability: vec![1.0 / n as f64; n], seed, provenance })
}

/// Coordinate-wise expectation of every sampled input.
pub fn mean_scenario(net: &NetworkSpec, dists: &DistributionConfig) -> Result<Scenario> {
    dists.validate(net)?;
    Ok(build(net, dists, &mut Source::Mean))
}

const FORMAT_TAG: &str = "transync-scenarios";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileBody {
    format: String,
    version: u32,
    set: ScenarioSet,
}

/// Writes a JSON container `{format, version, set}`; floats round-trip exactly.
pub fn save_scenarios(set: &ScenarioSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let path = path.as_ref();
    let body = FileBody { format: FORMAT_TAG.into(), version: FORMAT_VERSION, set: set.clone() };
    let text = serde_json::to_string(&body).expect("scenario set serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<ScenarioSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let tag = value.get("format").and_then(|v| v.as_str());
    let version = value.get("version").and_then(|v| v.as_u64());
    if tag != Some(FORMAT_TAG) {
        return Err(Error::Format(format!("{}: not a scenario file", path.display())));
    }
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::Format(format!(
            "{}: unsupported version {:?}, expected {FORMAT_VERSION}",
            path.display(),
            version
        )));
    }
    let body: FileBody =
        serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    body.set.validate()?;
    Ok(body.set)
}

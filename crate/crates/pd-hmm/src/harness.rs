//! Experiment plumbing: JSON experiment configs, synthetic-data
//! generation, posterior functional summaries, interval scoring,
//! timestamped-graph ingestion, and atomic file I/O.

use crate::bpf::transition_simulate;
use crate::dual::{EntranceDistribution, PredictMode};
use crate::error::{Error, Result};
use crate::ewens::EPParams;
use crate::filter::{MixtureState, ObservationSequence, Pruning};
use crate::partition::Partition;
use crate::simplex::{paintbox_sample, sample_pd, sample_pd_conditional, FrequencyVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Evenly spaced observation schedule: `count` times starting at `start`
/// with gap `step`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedule {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

/// Observation sizes: one size for every time, or one per time point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    Uniform(u32),
    PerTime(Vec<u32>),
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes::Uniform(10)
    }
}

/// Prediction mode selector, mirroring [`PredictMode`] but serializable
/// and independent of a concrete seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Exact,
    #[default]
    Auto,
    MonteCarlo {
        samples: u32,
    },
}

impl ModeSpec {
    pub fn to_predict_mode(self, seed: u64) -> PredictMode {
        match self {
            ModeSpec::Exact => PredictMode::Exact,
            ModeSpec::Auto => PredictMode::Auto {
                support_cap: 200,
                samples: 2000,
                seed,
            },
            ModeSpec::MonteCarlo { samples } => PredictMode::MonteCarlo { samples, seed },
        }
    }
}

/// Serializable pruning strategy; also parses CLI shorthand:
/// `none`, `top:10`, `mass:0.9`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum PruneSpec {
    #[default]
    None,
    TopK {
        k: usize,
    },
    Mass {
        rho: f64,
    },
    Stratified {
        k: usize,
        seed: u64,
    },
}

impl PruneSpec {
    pub fn to_pruning(self) -> Pruning {
        match self {
            PruneSpec::None => Pruning::None,
            PruneSpec::TopK { k } => Pruning::TopK(k),
            PruneSpec::Mass { rho } => Pruning::MassThreshold(rho),
            PruneSpec::Stratified { k, seed } => Pruning::Stratified { k, seed },
        }
    }
}

impl FromStr for PruneSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unrecognized pruning spec `{s}`"));
        if s == "none" {
            return Ok(PruneSpec::None);
        }
        if let Some(k) = s.strip_prefix("top:") {
            return Ok(PruneSpec::TopK {
                k: k.parse().map_err(|_| bad())?,
            });
        }
        if let Some(k) = s.strip_prefix("strat:") {
            return Ok(PruneSpec::Stratified {
                k: k.parse().map_err(|_| bad())?,
                seed: 0,
            });
        }
        if let Some(rho) = s.strip_prefix("mass:") {
            let rho: f64 = rho.parse().map_err(|_| bad())?;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(bad());
            }
            return Ok(PruneSpec::Mass { rho });
        }
        Err(bad())
    }
}

/// Parameter grid for maximum-likelihood fitting, as explicit axis values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
}

impl GridSpec {
    /// Cross product of the axes as validated parameter pairs.
    pub fn points(&self) -> Result<Vec<EPParams>> {
        let mut out = Vec::new();
        for &a in &self.alpha {
            for &t in &self.theta {
                out.push(EPParams::new(a, t)?);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("empty parameter grid".into()));
        }
        Ok(out)
    }
}

/// Parses a CLI range `start:step:end` (inclusive end, within 1e-9) or a
/// comma-separated list into axis values.
pub fn parse_axis(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("unrecognized grid axis `{s}`"));
    let fields: Vec<&str> = s.split(':').collect();
    match fields.len() {
        1 => s
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect(),
        3 => {
            let start: f64 = fields[0].parse().map_err(|_| bad())?;
            let step: f64 = fields[1].parse().map_err(|_| bad())?;
            let end: f64 = fields[2].parse().map_err(|_| bad())?;
            if !(step > 0.0) || end < start {
                return Err(bad());
            }
            let mut out = Vec::new();
            let mut k = 0u32;
            loop {
                let v = start + step * f64::from(k);
                if v > end + 1e-9 {
                    break;
                }
                out.push(v);
                k += 1;
            }
            Ok(out)
        }
        _ => Err(bad()),
    }
}

fn default_eps() -> f64 {
    1e-4
}
fn default_draws() -> usize {
    10_000
}
fn default_kappa() -> f64 {
    0.05
}

/// A full experiment description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub theta: f64,
    /// Parameter grid for `fit`; ignored elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Explicit observation times; exclusive with `schedule`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub sizes: Sizes,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub pruning: PruneSpec,
    /// Frequency-truncation threshold for sampling and summaries.
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Posterior Monte Carlo draws per summarized state.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Two-sided miss level: summaries report κ/2 and 1−κ/2 quantiles.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps must lie in (0,1), got {}",
                self.eps
            )));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must lie in (0,1), got {}",
                self.kappa
            )));
        }
        if self.draws == 0 {
            return Err(Error::InvalidConfig("draws must be positive".into()));
        }
        if let Sizes::PerTime(v) = &self.sizes {
            if v.iter().any(|&n| n == 0) {
                return Err(Error::InvalidConfig("all sizes must be positive".into()));
            }
        }
        if let Sizes::Uniform(n) = self.sizes {
            if n == 0 {
                return Err(Error::InvalidConfig("sizes must be positive".into()));
            }
        }
        self.resolve_times()?;
        Ok(())
    }

    pub fn params(&self) -> Result<EPParams> {
        EPParams::new(self.alpha, self.theta)
    }

    /// The observation times, from either `times` or `schedule`.
    pub fn resolve_times(&self) -> Result<Vec<f64>> {
        let times = match (&self.times, &self.schedule) {
            (Some(t), None) => t.clone(),
            (None, Some(s)) => {
                if s.count == 0 || !(s.step > 0.0) {
                    return Err(Error::InvalidConfig(
                        "schedule needs positive step and count".into(),
                    ));
                }
                (0..s.count).map(|k| s.start + s.step * k as f64).collect()
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either explicit times or a schedule, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "no observation times: give `times` or `schedule`".into(),
                ))
            }
        };
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig(
                "times must be finite and strictly increasing".into(),
            ));
        }
        Ok(times)
    }

    /// Per-time observation sizes for a schedule of the given length.
    pub fn resolve_sizes(&self, len: usize) -> Result<Vec<u32>> {
        match &self.sizes {
            Sizes::Uniform(n) => Ok(vec![*n; len]),
            Sizes::PerTime(v) => {
                if v.len() != len {
                    return Err(Error::InvalidConfig(format!(
                        "{} sizes for {} time points",
                        v.len(),
                        len
                    )));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn predict_mode(&self) -> PredictMode {
        self.mode.to_predict_mode(self.seed)
    }

    pub fn pruning(&self) -> Pruning {
        self.pruning.to_pruning()
    }
}

// ---------------------------------------------------------------------------
// Synthetic experiments
// ---------------------------------------------------------------------------

/// A simulated latent trajectory with the induced observations and the
/// latent heterozygosity at every observation time.
#[derive(Debug, Clone)]
pub struct SimulatedExperiment {
    pub seq: ObservationSequence,
    pub truth_h2: Vec<f64>,
    pub latent: Vec<FrequencyVector>,
}

/// Simulates a latent trajectory (prior draw chained through the
/// transition law) and paintbox observations of the configured sizes.
/// Fixed seeds give bit-identical output.
pub fn simulate_experiment(cfg: &ExperimentConfig) -> Result<SimulatedExperiment> {
    let params = cfg.params()?;
    let times = cfg.resolve_times()?;
    let sizes = cfg.resolve_sizes(times.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entrance_cache: HashMap<u64, EntranceDistribution> = HashMap::new();
    let mut x = sample_pd(&params, cfg.eps, &mut rng)?;
    let mut latent = Vec::with_capacity(times.len());
    let mut partitions = Vec::with_capacity(times.len());
    for (k, (&t, &n)) in times.iter().zip(&sizes).enumerate() {
        if k > 0 {
            let delta = t - times[k - 1];
            // quantise the key: deltas from a float schedule drift in the
            // last bits, and each cache miss rebuilds an expensive
            // entrance distribution
            let entrance = match entrance_cache.entry(delta_key(delta)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(EntranceDistribution::build(params.theta(), delta, 1e-10)?)
                }
            };
            x = transition_simulate(&params, &x, entrance, cfg.eps, &mut rng)?;
        }
        partitions.push(paintbox_sample(&x, n, &mut rng));
        latent.push(x.clone());
    }
    let truth_h2 = latent.iter().map(FrequencyVector::heterozygosity).collect();
    Ok(SimulatedExperiment {
        seq: ObservationSequence::new(times, partitions)?,
        truth_h2,
        latent,
    })
}

/// Per-time posteriors that ignore temporal structure: each state is the
/// single-observation posterior at that time. Serves as the weakest
/// baseline in scoring comparisons.
pub fn independent_posterior_states(seq: &ObservationSequence) -> Vec<MixtureState> {
    seq.times()
        .iter()
        .zip(seq.partitions())
        .map(|(&t, pi)| MixtureState {
            components: BTreeMap::from([(pi.clone(), 1.0)]),
            time: t,
            log_evidence: 0.0,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Posterior functional summaries
// ---------------------------------------------------------------------------

/// One row of a plot-ready summary: posterior mean and two-sided
/// (κ/2, 1−κ/2) quantiles of a functional, with optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub time: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: Option<f64>,
}

/// Cache key for time increments: increments within 1e-12 of each other
/// are treated as equal (the entrance law is smooth in t, so the
/// distinction is far below every other error in play).
pub(crate) fn delta_key(delta: f64) -> u64 {
    (delta * 1e12).round() as u64
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Monte Carlo summary of posterior heterozygosity under one mixture
/// state: draw a component by weight, then a conditional frequency
/// vector, and evaluate H₂.
pub fn summarize_h2<R: Rng + ?Sized>(
    params: &EPParams,
    state: &MixtureState,
    draws: usize,
    eps: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<SummaryRow> {
    if draws == 0 {
        return Err(Error::InvalidConfig("draws must be positive".into()));
    }
    let comps: Vec<(&Partition, f64)> = state.components.iter().map(|(p, &w)| (p, w)).collect();
    let cdf: Vec<f64> = comps
        .iter()
        .scan(0.0, |acc, (_, w)| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let u = rng.random_range(0.0..1.0);
        let idx = cdf.partition_point(|&c| c < u).min(comps.len() - 1);
        let chosen = comps[idx].0;
        let x = sample_pd_conditional(params, chosen, eps, rng)?;
        samples.push(x.heterozygosity());
    }
    let mean = samples.iter().sum::<f64>() / draws as f64;
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SummaryRow {
        time: state.time,
        mean,
        lower: empirical_quantile(&samples, kappa / 2.0),
        upper: empirical_quantile(&samples, 1.0 - kappa / 2.0),
        truth: None,
    })
}

/// Summarizes a whole series of states in parallel with per-state seeds,
/// attaching ground truth when available.
pub fn summarize_states(
    params: &EPParams,
    states: &[MixtureState],
    draws: usize,
    eps: f64,
    kappa: f64,
    seed: u64,
    truth: Option<&[f64]>,
) -> Result<Vec<SummaryRow>> {
    if let Some(t) = truth {
        if t.len() != states.len() {
            return Err(Error::InvalidConfig(format!(
                "{} truth values for {} states",
                t.len(),
                states.len()
            )));
        }
    }
    states
        .par_iter()
        .enumerate()
        .map(|(k, state)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let mut row = summarize_h2(params, state, draws, eps, kappa, &mut rng)?;
            row.truth = truth.map(|t| t[k]);
            Ok(row)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Interval scoring
// ---------------------------------------------------------------------------

/// Negatively oriented interval score for a central (1−κ) interval:
/// width plus (2/κ) times the miss distance on either side. Boundary
/// values count as covered.
pub fn interval_score(l: f64, u: f64, y: f64, kappa: f64) -> f64 {
    assert!(l <= u, "interval bounds out of order: {l} > {u}");
    assert!(kappa > 0.0 && kappa < 1.0, "kappa must lie in (0,1)");
    let mut s = u - l;
    if y < l {
        s += 2.0 / kappa * (l - y);
    }
    if y > u {
        s += 2.0 / kappa * (y - u);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub time: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub score: f64,
}

/// Per-time interval scores with their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSeries {
    pub entries: Vec<ScoreEntry>,
    pub aggregate: f64,
}

/// Scores a summary series against ground truth. Truth comes from the
/// rows themselves or, if provided, the explicit slice (which wins).
pub fn score_series(
    rows: &[SummaryRow],
    truth: Option<&[f64]>,
    kappa: f64,
) -> Result<ScoredSeries> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to score".into()));
    }
    if let Some(t) = truth {
        if t.len() != rows.len() {
            return Err(Error::InvalidConfig(format!(
                "{} truth values for {} rows",
                t.len(),
                rows.len()
            )));
        }
    }
    let mut entries = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        let y = match (truth.map(|t| t[k]), row.truth) {
            (Some(y), _) | (None, Some(y)) => y,
            (None, None) => {
                return Err(Error::InvalidConfig(format!(
                    "no ground truth for row at time {}",
                    row.time
                )))
            }
        };
        entries.push(ScoreEntry {
            time: row.time,
            lower: row.lower,
            upper: row.upper,
            truth: y,
            score: interval_score(row.lower, row.upper, y, kappa),
        });
    }
    let aggregate = entries.iter().map(|e| e.score).sum::<f64>() / entries.len() as f64;
    Ok(ScoredSeries { entries, aggregate })
}

// ---------------------------------------------------------------------------
// Graph ingestion
// ---------------------------------------------------------------------------

/// Windowing options for timestamped edge lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Window length in the edge file's time unit.
    pub window: f64,
    /// Diffusion time assigned per window: observation k gets time
    /// (k + 1/2) · time_unit.
    pub time_unit: f64,
    /// Keep connected components of size one (self-loop vertices).
    pub include_singletons: bool,
    /// Keep windows with no edges as empty partitions instead of
    /// dropping them.
    pub keep_empty: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            window: 1800.0,
            time_unit: 1.0,
            include_singletons: false,
            keep_empty: false,
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }
    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.size.push(1);
        self.parent.len() - 1
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (hi, lo) = if self.size[ra] >= self.size[rb] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            self.parent[lo] = hi;
            self.size[hi] += self.size[lo];
        }
    }
}

/// The outcome of ingesting an edge list: the induced observation
/// sequence plus human-readable warnings (e.g. empty windows).
#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub seq: ObservationSequence,
    pub warnings: Vec<String>,
}

fn parse_edge_line(line: &str, delim: char) -> Option<(f64, String, String)> {
    let mut fields = line.split(delim).map(str::trim);
    let t: f64 = fields.next()?.parse().ok()?;
    let a = fields.next()?.to_string();
    let b = fields.next()?.to_string();
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some((t, a, b))
}

/// Reads a timestamped edge list (`timestamp,node_a,node_b`, CSV or TSV,
/// header optional), buckets edges into consecutive windows starting at
/// the earliest timestamp, and reports the sorted connected-component
/// sizes of each window's graph as a partition. Window k is observed at
/// diffusion time (k + 1/2) · time_unit.
pub fn ingest_graph(path: &Path, opts: &IngestOptions) -> Result<IngestOutput> {
    if !(opts.window > 0.0) || !(opts.time_unit > 0.0) {
        return Err(Error::InvalidConfig(
            "window and time_unit must be positive".into(),
        ));
    }
    let file = std::fs::File::open(path)?;
    let mut edges: Vec<(f64, String, String)> = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let delim = if trimmed.contains('\t') { '\t' } else { ',' };
        match parse_edge_line(trimmed, delim) {
            Some(edge) => edges.push(edge),
            None if idx == 0 => continue, // header row
            None => {
                return Err(Error::InvalidConfig(format!(
                    "malformed edge row {}: `{trimmed}`",
                    idx + 1
                )))
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no edges found in {}",
            path.display()
        )));
    }
    let t0 = edges.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let mut windows: BTreeMap<u64, Vec<(&str, &str)>> = BTreeMap::new();
    for (t, a, b) in &edges {
        let idx = ((t - t0) / opts.window).floor() as u64;
        windows.entry(idx).or_default().push((a, b));
    }
    let last = *windows.keys().next_back().unwrap();
    let mut times = Vec::new();
    let mut partitions = Vec::new();
    let mut warnings = Vec::new();
    for w in 0..=last {
        let time = (w as f64 + 0.5) * opts.time_unit;
        let Some(window_edges) = windows.get(&w) else {
            warnings.push(format!("window {w} has no edges"));
            if opts.keep_empty {
                times.push(time);
                partitions.push(Partition::empty());
            }
            continue;
        };
        let mut uf = UnionFind::new();
        let mut ids: HashMap<&str, usize> = HashMap::new();
        for &(a, b) in window_edges {
            let ia = *ids.entry(a).or_insert_with(|| uf.add());
            let ib = *ids.entry(b).or_insert_with(|| uf.add());
            uf.union(ia, ib);
        }
        let mut sizes: HashMap<usize, u32> = HashMap::new();
        for i in 0..uf.parent.len() {
            let root = uf.find(i);
            *sizes.entry(root).or_insert(0) += 1;
        }
        let parts: Vec<u32> = sizes
            .into_values()
            .filter(|&s| opts.include_singletons || s >= 2)
            .collect();
        if parts.is_empty() {
            warnings.push(format!("window {w} has no qualifying components"));
            if !opts.keep_empty {
                continue;
            }
        }
        times.push(time);
        partitions.push(Partition::from_unsorted(parts));
    }
    Ok(IngestOutput {
        seq: ObservationSequence::new(times, partitions)?,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Writes bytes atomically: to a temporary sibling first, then renamed
/// over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ObsRecord {
    t: f64,
    partition: Partition,
}

/// Writes an observation sequence as JSON lines
/// `{"t": 0.0, "partition": [2,1]}`.
pub fn write_observations(path: &Path, seq: &ObservationSequence) -> Result<()> {
    let mut out = String::new();
    for (&t, pi) in seq.times().iter().zip(seq.partitions()) {
        out.push_str(&serde_json::to_string(&ObsRecord {
            t,
            partition: pi.clone(),
        })?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads an observation sequence from JSON lines.
pub fn read_observations(path: &Path) -> Result<ObservationSequence> {
    let text = std::fs::read_to_string(path)?;
    let mut times = Vec::new();
    let mut partitions = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ObsRecord = serde_json::from_str(line)?;
        times.push(rec.t);
        partitions.push(rec.partition);
    }
    ObservationSequence::new(times, partitions)
}

/// A labelled collection of mixture states, e.g. `"kind": "filtered"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub kind: String,
    pub states: Vec<MixtureState>,
}

pub fn write_states(path: &Path, kind: &str, states: &[MixtureState]) -> Result<()> {
    let file = StateFile {
        kind: kind.to_string(),
        states: states.to_vec(),
    };
    write_atomic(path, serde_json::to_string_pretty(&file)?.as_bytes())
}

pub fn read_states(path: &Path) -> Result<StateFile> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes summary rows as CSV `time,mean,q025,q975[,truth]`; the truth
/// column appears when any row carries it.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let with_truth = rows.iter().any(|r| r.truth.is_some());
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["time", "mean", "q025", "q975"];
        if with_truth {
            header.push("truth");
        }
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![
                r.time.to_string(),
                r.mean.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
            ];
            if with_truth {
                rec.push(r.truth.map(|t| t.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// Reads summary rows back from `write_summary_csv` output.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let has_truth = reader.headers()?.iter().any(|h| h == "truth");
    let parse = |field: &str, what: &str| -> Result<f64> {
        field
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad {what} value `{field}`")))
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(SummaryRow {
            time: parse(&rec[0], "time")?,
            mean: parse(&rec[1], "mean")?,
            lower: parse(&rec[2], "q025")?,
            upper: parse(&rec[3], "q975")?,
            truth: if has_truth && !rec[4].is_empty() {
                Some(parse(&rec[4], "truth")?)
            } else {
                None
            },
        });
    }
    Ok(rows)
}

/// Writes a fit evidence table as CSV `alpha,theta,log_evidence`.
pub fn write_evidence_csv(path: &Path, table: &[(EPParams, f64)]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["alpha", "theta", "log_evidence"])?;
        for (p, ev) in table {
            w.write_record(&[
                p.alpha().to_string(),
                p.theta().to_string(),
                ev.to_string(),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

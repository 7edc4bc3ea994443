//! Exact forward filtering: prediction through the dual process, Bayes
//! updates by coagulation, pruning, marginal likelihood, and grid MLE.
//!
//! Posterior laws of the latent frequencies stay inside a finite mixture
//! family indexed by partitions, so a `MixtureState` — a weighted, finite
//! set of partitions — is an exact representation of the filtering
//! distribution at any time (up to optional pruning).

use crate::coag::coag_log_coefficients;
use crate::dual::{PredictMode, Propagator};
use crate::error::{Error, Result};
use crate::ewens::{ln_psf, EPParams};
use crate::numeric::LogSum;
use crate::partition::Partition;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A finite mixture over conditional Poisson–Dirichlet laws, indexed by
/// partitions. Weights are strictly positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct MixtureState {
    pub components: BTreeMap<Partition, f64>,
    pub time: f64,
    pub log_evidence: f64,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    partition: Partition,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    time: f64,
    components: Vec<ComponentRepr>,
    log_evidence: f64,
}

impl TryFrom<MixtureRepr> for MixtureState {
    type Error = Error;
    fn try_from(raw: MixtureRepr) -> Result<Self> {
        let mut components = BTreeMap::new();
        for c in raw.components {
            if !(c.weight > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "non-positive weight {} for component {}",
                    c.weight, c.partition
                )));
            }
            if components.insert(c.partition.clone(), c.weight).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate component {}",
                    c.partition
                )));
            }
        }
        let total: f64 = components.values().sum();
        if !((total - 1.0).abs() < 1e-6) {
            return Err(Error::InvalidConfig(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(MixtureState {
            components,
            time: raw.time,
            log_evidence: raw.log_evidence,
        })
    }
}

impl From<MixtureState> for MixtureRepr {
    fn from(s: MixtureState) -> Self {
        MixtureRepr {
            time: s.time,
            components: s
                .components
                .into_iter()
                .map(|(partition, weight)| ComponentRepr { partition, weight })
                .collect(),
            log_evidence: s.log_evidence,
        }
    }
}

impl MixtureState {
    /// Total mixture mass; 1 up to rounding for any state produced here.
    pub fn total_mass(&self) -> f64 {
        self.components.values().sum()
    }

    pub fn support_size(&self) -> usize {
        self.components.len()
    }

    /// Posterior mean of a per-component functional.
    pub fn expect(&self, f: impl Fn(&Partition) -> f64) -> f64 {
        self.components.iter().map(|(p, &w)| w * f(p)).sum()
    }
}

/// A time-stamped sequence of partition observations with strictly
/// increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    times: Vec<f64>,
    partitions: Vec<Partition>,
}

impl ObservationSequence {
    pub fn new(times: Vec<f64>, partitions: Vec<Partition>) -> Result<Self> {
        if times.len() != partitions.len() {
            return Err(Error::InvalidSequence(format!(
                "{} times but {} partitions",
                times.len(),
                partitions.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidSequence("empty sequence".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSequence(
                "times must be finite and strictly increasing".into(),
            ));
        }
        Ok(ObservationSequence { times, partitions })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// The same observations in reverse order, with times negated so they
    /// increase again; gaps between consecutive observations are preserved.
    pub fn reversed(&self) -> ObservationSequence {
        ObservationSequence {
            times: self.times.iter().rev().map(|&t| -t).collect(),
            partitions: self.partitions.iter().rev().cloned().collect(),
        }
    }
}

/// Pruning strategy applied after prediction and update steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    None,
    /// Keep the K heaviest components.
    TopK(usize),
    /// Keep the lightest prefix (by decreasing weight) whose cumulative
    /// mass reaches ρ ∈ (0, 1].
    MassThreshold(f64),
    /// Optimal-resampling pruning (Fearnhead & Clifford): components with
    /// weight above a solved threshold κ are kept exactly, the rest are
    /// systematically resampled with probability w/κ and survive with
    /// weight κ. Expectations are preserved exactly under the resampling
    /// randomness, so — unlike `TopK` — the pruned mixture does not lose
    /// its low-weight tail structure. Deterministic given `seed` and the
    /// input state.
    Stratified { k: usize, seed: u64 },
}

/// Returns the pruned, renormalised state. Ties broken by canonical
/// partition order, so the result is deterministic.
pub fn prune(components: &BTreeMap<Partition, f64>, strategy: Pruning) -> BTreeMap<Partition, f64> {
    let keep: Vec<(&Partition, f64)> = {
        // sort by decreasing weight, then canonical order
        let mut items: Vec<(&Partition, f64)> =
            components.iter().map(|(p, &w)| (p, w)).collect();
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        match strategy {
            Pruning::None => items,
            Pruning::TopK(k) => {
                items.truncate(k.max(1));
                items
            }
            Pruning::MassThreshold(rho) => {
                let mut acc = 0.0;
                let mut cut = items.len();
                for (i, &(_, w)) in items.iter().enumerate() {
                    acc += w;
                    if acc >= rho - 1e-12 {
                        cut = i + 1;
                        break;
                    }
                }
                items.truncate(cut);
                items
            }
            Pruning::Stratified { k, seed } => stratified_prune(items, k.max(1), seed),
        }
    };
    let total: f64 = keep.iter().map(|&(_, w)| w).sum();
    keep.into_iter()
        .map(|(p, w)| (p.clone(), w / total))
        .collect()
}

/// Fearnhead–Clifford optimal resampling down to an expected `k`
/// components. Items arrive sorted by decreasing weight. The threshold κ
/// solves A + (Σ_{i>A} w_i)/κ = k where the A heaviest weights are ≥ κ;
/// those are kept untouched and the remainder undergo systematic
/// resampling at rate w/κ.
fn stratified_prune(items: Vec<(&Partition, f64)>, k: usize, seed: u64) -> Vec<(&Partition, f64)> {
    use rand::{Rng, SeedableRng};
    if items.len() <= k {
        return items;
    }
    let total: f64 = items.iter().map(|&(_, w)| w).sum();
    let w: Vec<f64> = items.iter().map(|&(_, wt)| wt / total).collect();
    // suffix sums: tail[a] = Σ_{i≥a} w_i
    let mut tail = vec![0.0; w.len() + 1];
    for i in (0..w.len()).rev() {
        tail[i] = tail[i + 1] + w[i];
    }
    let mut a = 0usize;
    let mut kappa = tail[0] / k as f64;
    while a < k {
        kappa = tail[a] / (k - a) as f64;
        if w[a] < kappa {
            break;
        }
        a += 1;
    }
    // deterministic randomness: mix the seed with a fingerprint of the
    // weight vector so repeated calls within one pass decorrelate
    let mut fp = seed ^ (items.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for wt in &w {
        fp = fp.rotate_left(7) ^ wt.to_bits();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(fp);
    let mut keep: Vec<(&Partition, f64)> = items[..a].iter().map(|&(p, _)| (p, 0.0)).collect();
    for (i, item) in keep.iter_mut().enumerate() {
        item.1 = w[i] * total;
    }
    if a < k {
        let mut next = rng.random_range(0.0..kappa);
        let mut acc = 0.0;
        for (i, &(p, _)) in items.iter().enumerate().skip(a) {
            acc += w[i];
            while acc > next {
                keep.push((p, kappa * total));
                next += kappa;
            }
        }
    }
    keep
}

/// The filtering state after the first observation: {π⁰ ↦ 1} with
/// evidence ln P(π⁰) under the stationary law.
pub fn init(params: &EPParams, pi0: &Partition, t0: f64) -> MixtureState {
    let mut components = BTreeMap::new();
    components.insert(pi0.clone(), 1.0);
    MixtureState {
        components,
        time: t0,
        log_evidence: ln_psf(params, pi0),
    }
}

/// Pushes the state forward by Δ through the dual process.
pub fn predict(state: &MixtureState, delta: f64, prop: &Propagator) -> Result<MixtureState> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "prediction step must be non-negative, got {delta}"
        )));
    }
    Ok(MixtureState {
        components: prop.propagate(&state.components, delta)?,
        time: state.time + delta,
        log_evidence: state.log_evidence,
    })
}

/// Bayes update with a new observation π: every component ω coagulates
/// with π, the merge target μ accumulating mass
/// (w_ω / P(ω)) · 𝓗(ω, π | μ) · P(μ), all in the log domain. Returns the
/// normalised posterior and the log predictive probability of π.
pub fn update(
    params: &EPParams,
    state: &MixtureState,
    pi: &Partition,
) -> Result<(MixtureState, f64)> {
    let mut acc: BTreeMap<Partition, LogSum> = BTreeMap::new();
    for (omega, &w) in &state.components {
        let base = w.ln() - ln_psf(params, omega);
        for (mu, ln_h) in coag_log_coefficients(omega, pi) {
            let term = base + ln_h + ln_psf(params, &mu);
            acc.entry(mu).or_insert_with(LogSum::new).add(term);
        }
    }
    let logs: Vec<(Partition, f64)> = acc.into_iter().map(|(mu, s)| (mu, s.value())).collect();
    let mut norm = LogSum::new();
    for &(_, v) in &logs {
        norm.add(v);
    }
    let log_predictive = norm.value();
    if !log_predictive.is_finite() {
        return Err(Error::DegenerateWeights(format!(
            "zero predictive mass updating with {pi}"
        )));
    }
    let components: BTreeMap<Partition, f64> = logs
        .into_iter()
        .filter_map(|(mu, v)| {
            let w = (v - log_predictive).exp();
            (w >= crate::dual::WEIGHT_FLOOR).then_some((mu, w))
        })
        .collect();
    let total: f64 = components.values().sum();
    let components = components
        .into_iter()
        .map(|(p, w)| (p, w / total))
        .collect();
    Ok((
        MixtureState {
            components,
            time: state.time,
            log_evidence: state.log_evidence + log_predictive,
        },
        log_predictive,
    ))
}

/// Full forward pass: per-step post-update states, with pruning applied
/// after every prediction and every update.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// Post-update state at each observation time.
    pub states: Vec<MixtureState>,
    /// Total log marginal likelihood of the sequence.
    pub log_evidence: f64,
    /// Support size after each prediction and update, for diagnostics.
    pub support_sizes: Vec<(usize, usize)>,
}

pub fn filter(
    params: &EPParams,
    seq: &ObservationSequence,
    mode: PredictMode,
    pruning: Pruning,
) -> Result<FilterOutput> {
    let prop = Propagator::new(params.theta(), mode);
    filter_with(params, seq, &prop, pruning)
}

/// As `filter`, but reusing a caller-provided propagator (and its memo
/// tables) across runs.
pub fn filter_with(
    params: &EPParams,
    seq: &ObservationSequence,
    prop: &Propagator,
    pruning: Pruning,
) -> Result<FilterOutput> {
    let mut state = init(params, &seq.partitions()[0], seq.times()[0]);
    let mut states = vec![state.clone()];
    let mut support_sizes = vec![(1usize, 1usize)];
    for k in 1..seq.len() {
        let delta = seq.times()[k] - seq.times()[k - 1];
        let mut predicted = predict(&state, delta, prop)?;
        predicted.components = prune(&predicted.components, pruning);
        let predicted_support = predicted.support_size();
        let (mut updated, _) = update(params, &predicted, &seq.partitions()[k])?;
        updated.components = prune(&updated.components, pruning);
        support_sizes.push((predicted_support, updated.support_size()));
        states.push(updated.clone());
        state = updated;
    }
    Ok(FilterOutput {
        log_evidence: state.log_evidence,
        states,
        support_sizes,
    })
}

/// Grid maximum-likelihood: runs the filter at every grid point and
/// returns the argmax of the log evidence together with the full table.
/// Ties break to the lexicographically smallest (α, θ).
pub fn fit_grid(
    seq: &ObservationSequence,
    grid: &[EPParams],
    mode: PredictMode,
    pruning: Pruning,
) -> Result<(EPParams, Vec<(EPParams, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty parameter grid".into()));
    }
    let table: Vec<(EPParams, f64)> = grid
        .par_iter()
        .map(|&p| filter(&p, seq, mode, pruning).map(|out| (p, out.log_evidence)))
        .collect::<Result<_>>()?;
    let best = table
        .iter()
        .cloned()
        .max_by(|a, b| {
            a.1.partial_cmp(&b.1).unwrap().then_with(|| {
                // reversed: smaller (α, θ) wins ties under max_by
                (b.0.alpha(), b.0.theta())
                    .partial_cmp(&(a.0.alpha(), a.0.theta()))
                    .unwrap()
            })
        })
        .unwrap()
        .0;
    Ok((best, table))
}

//! Bootstrap particle filter over the latent Poisson–Dirichlet diffusion:
//! the comparison baseline for the exact mixture filter.
//!
//! Particles are ε-truncated frequency vectors. Propagation uses the
//! latent transition hierarchy — draw a block count from the entrance
//! distribution, paint a latent partition from the current particle, then
//! draw the new state from the conditional Poisson–Dirichlet law — and
//! weighting uses the exact unlabelled paintbox likelihood.

use crate::dual::EntranceDistribution;
use crate::error::{Error, Result};
use crate::ewens::EPParams;
use crate::filter::ObservationSequence;
use crate::numeric::LogSum;
use crate::simplex::{likelihood, paintbox_sample, sample_pd, sample_pd_conditional, FrequencyVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A weighted set of frequency-vector particles.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: Vec<FrequencyVector>,
    /// Unnormalised log weights.
    pub log_weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Normalised linear weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut norm = LogSum::new();
        for &lw in &self.log_weights {
            norm.add(lw);
        }
        let z = norm.value();
        self.log_weights.iter().map(|&lw| (lw - z).exp()).collect()
    }

    /// Effective sample size 1 / Σ w_i² ∈ [1, M].
    pub fn ess(&self) -> f64 {
        let w = self.weights();
        1.0 / w.iter().map(|&x| x * x).sum::<f64>()
    }
}

/// One draw from the latent transition kernel over a gap Δ: the block
/// count comes from the (cached) entrance distribution, the latent
/// partition from painting that many squares with the current particle,
/// and the new particle from the conditional PD law given that partition.
pub fn transition_simulate<R: Rng + ?Sized>(
    params: &EPParams,
    x: &FrequencyVector,
    entrance: &EntranceDistribution,
    eps: f64,
    rng: &mut R,
) -> Result<FrequencyVector> {
    let blocks = entrance.sample(rng);
    let latent = paintbox_sample(x, blocks, rng);
    sample_pd_conditional(params, &latent, eps, rng)
}

/// Per-step summaries kept by the particle filter: full ensembles are
/// discarded to bound memory.
#[derive(Debug, Clone)]
pub struct BpfStep {
    pub time: f64,
    /// Post-update heterozygosity of each particle.
    pub h2: Vec<f64>,
    /// Matching normalised weights.
    pub weights: Vec<f64>,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct BpfOutput {
    pub steps: Vec<BpfStep>,
    pub log_evidence: f64,
}

/// Standard bootstrap SMC with multinomial resampling triggered at
/// ESS < M/2. The log evidence estimate is Σ_k ln Σ_i W_{i,k−1} g_k(x_i),
/// the usual product-of-weight-averages form, unbiased in the linear
/// domain.
pub fn bpf_filter(
    params: &EPParams,
    seq: &ObservationSequence,
    particles: usize,
    eps: f64,
    seed: u64,
) -> Result<BpfOutput> {
    if particles < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 particles, got {particles}"
        )));
    }
    let m = particles;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // per-particle seeds per step keep the parallel propagation deterministic
    let step_seed = |step: usize, i: usize| {
        seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
    };

    // Initial ensemble from the prior, weighted by the first observation.
    let mut states: Vec<FrequencyVector> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(step_seed(0, i));
            sample_pd(params, eps, &mut r)
        })
        .collect::<Result<_>>()?;
    let mut log_evidence = 0.0;
    let mut norm_weights = vec![1.0 / m as f64; m];
    let mut steps = Vec::with_capacity(seq.len());

    let mut entrance_cache: Vec<(u64, EntranceDistribution)> = Vec::new();

    for k in 0..seq.len() {
        if k > 0 {
            let delta = seq.times()[k] - seq.times()[k - 1];
            let key = crate::harness::delta_key(delta);
            if !entrance_cache.iter().any(|(b, _)| *b == key) {
                let dist = EntranceDistribution::build(params.theta(), delta, 1e-10)?;
                entrance_cache.push((key, dist));
            }
            let entrance = &entrance_cache.iter().find(|(b, _)| *b == key).unwrap().1;
            states = states
                .into_par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut r = ChaCha8Rng::seed_from_u64(step_seed(k, i));
                    transition_simulate(params, &x, entrance, eps, &mut r)
                })
                .collect::<Result<_>>()?;
        }
        let pi = &seq.partitions()[k];
        let log_like: Vec<f64> = states
            .par_iter()
            .map(|x| likelihood(x, pi).ln())
            .collect();
        if log_like.iter().all(|&l| l == f64::NEG_INFINITY) {
            return Err(Error::DegenerateWeights(format!(
                "all {m} particles have zero likelihood for observation {pi} at step {k}"
            )));
        }
        // evidence increment ln Σ_i W_i g_i
        let mut inc = LogSum::new();
        for (w, &l) in norm_weights.iter().zip(&log_like) {
            if *w > 0.0 {
                inc.add(w.ln() + l);
            }
        }
        log_evidence += inc.value();
        // posterior weights ∝ W_i g_i
        let log_posterior: Vec<f64> = norm_weights
            .iter()
            .zip(&log_like)
            .map(|(w, &l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        let ensemble = ParticleEnsemble {
            particles: Vec::new(),
            log_weights: log_posterior,
        };
        norm_weights = ensemble.weights();
        let ess = 1.0 / norm_weights.iter().map(|&w| w * w).sum::<f64>();
        let resample = ess < m as f64 / 2.0;
        steps.push(BpfStep {
            time: seq.times()[k],
            h2: states.iter().map(|x| x.heterozygosity()).collect(),
            weights: norm_weights.clone(),
            ess,
            resampled: resample,
        });
        if resample {
            let mut cdf = Vec::with_capacity(m);
            let mut acc = 0.0;
            for &w in &norm_weights {
                acc += w;
                cdf.push(acc);
            }
            let picks: Vec<usize> = (0..m)
                .map(|_| {
                    let u = rng.random_range(0.0..1.0);
                    match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                        Ok(i) | Err(i) => i.min(m - 1),
                    }
                })
                .collect();
            states = picks.iter().map(|&i| states[i].clone()).collect();
            norm_weights = vec![1.0 / m as f64; m];
        }
    }
    Ok(BpfOutput {
        steps,
        log_evidence,
    })
}

//! Frequency vectors on the infinite simplex: Poisson–Dirichlet sampling,
//! the paintbox observation channel, and exact partition likelihoods.
//!
//! A `FrequencyVector` stores the explicitly tracked atoms of a ranked
//! frequency vector plus the untracked tail mass left by ε-truncation.
//! `sample_pd` draws from the PD(α, θ) prior by stick breaking;
//! `sample_pd_conditional` draws from the posterior given an observed
//! partition via its Beta–Dirichlet–PD decomposition. `likelihood` is the
//! exact paintbox probability of an unlabelled partition given frequencies.

use crate::error::{Error, Result};
use crate::ewens::EPParams;
use crate::partition::Partition;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use std::collections::BTreeMap;

/// A ranked frequency vector with explicit atoms and residual tail mass.
/// Atoms are non-increasing and `atoms.sum() + tail == 1` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    atoms: Vec<f64>,
    tail: f64,
}

impl FrequencyVector {
    /// Builds a frequency vector from atom masses and tail mass,
    /// normalising and ranking. Errors if masses are negative or all zero.
    pub fn new(mut atoms: Vec<f64>, tail: f64) -> Result<Self> {
        if tail < 0.0 || atoms.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::InvalidParams(
                "frequencies must be non-negative and finite".into(),
            ));
        }
        let total: f64 = atoms.iter().sum::<f64>() + tail;
        if !(total > 0.0) {
            return Err(Error::InvalidParams("frequencies sum to zero".into()));
        }
        atoms.retain(|&a| a > 0.0);
        for a in &mut atoms {
            *a /= total;
        }
        atoms.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(FrequencyVector {
            atoms,
            tail: tail / total,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// k-th power sum Σ_i x_i^k. The tail contributes only at k = 1: it is
    /// an aggregate of atoms individually too small to matter at higher
    /// powers.
    pub fn power_sum(&self, k: u32) -> f64 {
        if k == 1 {
            return self.atoms.iter().sum::<f64>() + self.tail;
        }
        self.atoms.iter().map(|&a| a.powi(k as i32)).sum()
    }

    /// Heterozygosity H₂ = 1 − Σ x_i²: the probability that two draws from
    /// the paintbox land in different blocks.
    pub fn heterozygosity(&self) -> f64 {
        1.0 - self.power_sum(2)
    }
}

/// Plug-in heterozygosity of an observed partition: 1 − Σ (π_j/n)².
pub fn plug_in_heterozygosity(pi: &Partition) -> f64 {
    let n = pi.size() as f64;
    if n == 0.0 {
        return 0.0;
    }
    1.0 - pi
        .parts()
        .iter()
        .map(|&p| (p as f64 / n).powi(2))
        .sum::<f64>()
}

fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let d = Beta::new(a, b)
        .map_err(|e| Error::InvalidParams(format!("Beta({a}, {b}): {e}")))?;
    Ok(d.sample(rng))
}

/// ε-truncated stick-breaking draw from PD(α, θ): V_i ~ Beta(1 − α, θ + iα)
/// and x_i = V_i ∏_{j<i} (1 − V_j), stopped once the unbroken remainder
/// drops to ε, which becomes the tail.
pub fn sample_pd<R: Rng + ?Sized>(params: &EPParams, eps: f64, rng: &mut R) -> Result<FrequencyVector> {
    sample_pd_raw(params.alpha(), params.theta(), eps, rng)
}

fn sample_pd_raw<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    eps: f64,
    rng: &mut R,
) -> Result<FrequencyVector> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidParams(format!(
            "truncation level must be in (0, 1), got {eps}"
        )));
    }
    let mut atoms = Vec::new();
    let mut remaining = 1.0f64;
    let mut i = 1u64;
    while remaining > eps {
        let v = sample_beta(1.0 - alpha, theta + i as f64 * alpha, rng)?;
        atoms.push(remaining * v);
        remaining *= 1.0 - v;
        i += 1;
        if i > 10_000_000 {
            return Err(Error::NumericalInstability(
                "stick breaking failed to reach the truncation level".into(),
            ));
        }
    }
    FrequencyVector::new(atoms, remaining)
}

/// ε-truncated draw from the posterior law of the frequencies given an
/// observed partition π of size n with l parts:
///
///   x =ᵈ ((1−W)·Dir(π₁−α, …, π_l−α), W·PD(α, θ+αl))↓,
///   W ~ Beta(θ + αl, n − αl).
///
/// The PD component is truncated at ε / max(W, ε) so the final untracked
/// tail mass W·tail stays below ε. Empty and singleton observations carry
/// no grouping information and fall back to the prior.
pub fn sample_pd_conditional<R: Rng + ?Sized>(
    params: &EPParams,
    pi: &Partition,
    eps: f64,
    rng: &mut R,
) -> Result<FrequencyVector> {
    let n = pi.size();
    if n <= 1 {
        return sample_pd(params, eps, rng);
    }
    let (alpha, theta) = (params.alpha(), params.theta());
    let l = pi.len() as f64;
    let w = sample_beta(theta + alpha * l, n as f64 - alpha * l, rng)?;
    // Dirichlet via normalised Gammas
    let mut dir: Vec<f64> = Vec::with_capacity(pi.len());
    for &p in pi.parts() {
        let g = Gamma::new(p as f64 - alpha, 1.0)
            .map_err(|e| Error::InvalidParams(format!("Gamma({}, 1): {e}", p as f64 - alpha)))?;
        dir.push(g.sample(rng));
    }
    let total: f64 = dir.iter().sum();
    let inner_eps = (eps / w.max(eps)).min(0.5);
    let fresh = sample_pd_raw(alpha, theta + alpha * l, inner_eps, rng)?;
    let mut atoms: Vec<f64> = dir
        .into_iter()
        .map(|g| (1.0 - w) * g / total)
        .collect();
    atoms.extend(fresh.atoms().iter().map(|&a| w * a));
    FrequencyVector::new(atoms, w * fresh.tail())
}

/// Draws an unlabelled partition of n from the paintbox channel: each of n
/// squares independently picks an atom with its mass, or falls in the tail
/// and opens its own singleton block (tail atoms are individually
/// negligible, so tail collisions are ignored).
pub fn paintbox_sample<R: Rng + ?Sized>(x: &FrequencyVector, n: u32, rng: &mut R) -> Partition {
    let mut counts = vec![0u32; x.atoms().len()];
    let mut singletons = 0u32;
    for _ in 0..n {
        let mut u = rng.random_range(0.0..1.0);
        let mut hit = false;
        for (i, &a) in x.atoms().iter().enumerate() {
            u -= a;
            if u < 0.0 {
                counts[i] += 1;
                hit = true;
                break;
            }
        }
        if !hit {
            singletons += 1;
        }
    }
    counts.retain(|&c| c > 0);
    counts.extend(std::iter::repeat(1).take(singletons as usize));
    Partition::from_unsorted(counts)
}

/// Exact paintbox likelihood P(π | x) = C(π) Σ_{i₁≠…≠i_d} ∏_j x_{i_j}^{π_j}.
///
/// The distinct-index monomial sum A(π) is evaluated by the augmented
/// monomial recursion A(π ∪ {k}) = A(π) p_k − Σ_j A(π with part j merged
/// with k), memoised over sub-shapes; p_k are power sums of x.
pub fn likelihood(x: &FrequencyVector, pi: &Partition) -> f64 {
    let mut memo: BTreeMap<Partition, f64> = BTreeMap::new();
    let powers: Vec<f64> = (0..=pi.size()).map(|k| x.power_sum(k.max(1))).collect();
    let a = monomial_sum(pi, &powers, &mut memo);
    (pi.ln_combinatorial_coefficient()).exp() * a.max(0.0)
}

fn monomial_sum(pi: &Partition, powers: &[f64], memo: &mut BTreeMap<Partition, f64>) -> f64 {
    if pi.is_empty() {
        return 1.0;
    }
    if let Some(&v) = memo.get(pi) {
        return v;
    }
    // peel off the smallest part k
    let k = *pi.parts().last().unwrap();
    let mut rest: Vec<u32> = pi.parts().to_vec();
    rest.pop();
    let rho = Partition::from_unsorted(rest);
    let mut acc = monomial_sum(&rho, powers, memo) * powers[k as usize];
    for (j, &p) in rho.parts().iter().enumerate() {
        let mut merged: Vec<u32> = rho.parts().to_vec();
        merged[j] = p + k;
        let merged = Partition::from_unsorted(merged);
        acc -= monomial_sum(&merged, powers, memo);
    }
    memo.insert(pi.clone(), acc);
    acc
}

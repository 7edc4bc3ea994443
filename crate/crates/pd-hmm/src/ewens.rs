//! The two-parameter Ewens–Pitman sampling formula and its Chinese
//! restaurant process (CRP) kernels.
//!
//! `EPParams` holds a valid (α, θ) pair. `ln_psf` evaluates the unordered
//! sampling formula, the stationary law of the partition-valued chain.
//! The conditional kernels extend an observed partition by additional
//! squares, either one at a time (`crp_conditional_simulate`) or as a
//! full distribution over merge targets (`crp_conditional`).

use crate::coag::{coag_with_coefficients, WeightedCoagulation};
use crate::error::{Error, Result};
use crate::numeric::{ln_rising, LogSum};
use crate::partition::Partition;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameters (α, θ) of the two-parameter Ewens–Pitman family, restricted
/// to the diffusive regime 0 ≤ α < 1, θ > −α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct EPParams {
    alpha: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    theta: f64,
}

impl TryFrom<RawParams> for EPParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        EPParams::new(raw.alpha, raw.theta)
    }
}

impl From<EPParams> for RawParams {
    fn from(p: EPParams) -> Self {
        RawParams {
            alpha: p.alpha,
            theta: p.theta,
        }
    }
}

impl EPParams {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        if !(theta > -alpha) || !theta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "theta must exceed -alpha, got theta={theta} alpha={alpha}"
            )));
        }
        Ok(EPParams { alpha, theta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// ln P(π) under the unordered Ewens–Pitman sampling formula.
///
/// The leading θ in ∏_{i<l}(θ + iα) is cancelled against the leading θ of
/// the rising factorial θ_(n) so the evaluation stays real for θ ∈ (−α, 0).
pub fn ln_psf(params: &EPParams, pi: &Partition) -> f64 {
    let (alpha, theta) = (params.alpha, params.theta);
    if pi.is_empty() {
        return 0.0;
    }
    let l = pi.len() as u64;
    let n = pi.size() as u64;
    let mut acc = pi.ln_combinatorial_coefficient();
    for i in 1..l {
        acc += (theta + i as f64 * alpha).ln();
    }
    for j in 1..n {
        acc -= (theta + j as f64).ln();
    }
    for &p in pi.parts() {
        acc += ln_rising(1.0 - alpha, p as u64 - 1);
    }
    acc
}

/// P(π) in the linear domain.
pub fn psf(params: &EPParams, pi: &Partition) -> f64 {
    ln_psf(params, pi).exp()
}

/// Draws a partition of n by the Chinese restaurant process: square k+1
/// joins an existing part of size p with probability (p − α)/(k + θ) and
/// opens a new part with probability (θ + lα)/(k + θ).
pub fn crp_simulate<R: Rng + ?Sized>(params: &EPParams, n: u32, rng: &mut R) -> Partition {
    let mut parts: Vec<u32> = Vec::new();
    for k in 0..n as u64 {
        let denom = k as f64 + params.theta;
        let new_mass = (params.theta + parts.len() as f64 * params.alpha) / denom;
        let mut u = rng.random_range(0.0..1.0) - new_mass;
        if u < 0.0 {
            parts.push(1);
            continue;
        }
        let mut joined = false;
        for p in parts.iter_mut() {
            u -= (*p as f64 - params.alpha) / denom;
            if u < 0.0 {
                *p += 1;
                joined = true;
                break;
            }
        }
        if !joined {
            // guard against rounding at the top of the unit interval
            *parts.last_mut().unwrap() += 1;
        }
    }
    Partition::from_unsorted(parts)
}

/// The conditional law of the merged partition when γ fresh squares are
/// appended to an observed ω: each μ ∈ coag(ω, γ) receives mass
/// 𝓗(ω, γ | μ) P(μ) / P(ω). Masses sum to the sampling-formula
/// probability of γ's shape arising in the extension; for the full
/// conditional over all γ of a given size they sum to one.
pub fn crp_conditional(
    params: &EPParams,
    omega: &Partition,
    gamma: &Partition,
) -> Vec<WeightedCoagulation> {
    let ln_base = ln_psf(params, omega);
    coag_with_coefficients(omega, gamma)
        .into_iter()
        .map(|w| WeightedCoagulation {
            coefficient: (w.coefficient.ln() + ln_psf(params, &w.target) - ln_base).exp(),
            target: w.target,
        })
        .collect()
}

/// Extends ω by `extra` squares one at a time under the conditional CRP:
/// a new square joins an existing part of size p with probability
/// (p − α)/(|ω| + θ) and opens a new part with probability (θ + lα)/(|ω| + θ).
/// Returns the merged partition of size |ω| + extra.
pub fn crp_conditional_simulate<R: Rng + ?Sized>(
    params: &EPParams,
    omega: &Partition,
    extra: u32,
    rng: &mut R,
) -> Partition {
    let mut parts: Vec<u32> = omega.parts().to_vec();
    let mut size = omega.size() as u64;
    for _ in 0..extra {
        let denom = size as f64 + params.theta;
        let new_mass = (params.theta + parts.len() as f64 * params.alpha) / denom;
        let mut u = rng.random_range(0.0..1.0) - new_mass;
        if u < 0.0 {
            parts.push(1);
        } else {
            let mut joined = false;
            for p in parts.iter_mut() {
                u -= (*p as f64 - params.alpha) / denom;
                if u < 0.0 {
                    *p += 1;
                    joined = true;
                    break;
                }
            }
            if !joined {
                *parts.last_mut().unwrap() += 1;
            }
        }
        size += 1;
    }
    Partition::from_unsorted(parts)
}

/// Extends ω by `extra` squares through the conditional CRP and returns
/// the sub-partition induced by the new squares alone (two new squares are
/// grouped iff they sat in the same block, old or new). Its law is the
/// predictive kernel CRP_{ω↑·} = Σ_μ 𝓗(ω, γ | μ) P(μ) / P(ω).
pub fn crp_extension_simulate<R: Rng + ?Sized>(
    params: &EPParams,
    omega: &Partition,
    extra: u32,
    rng: &mut R,
) -> Partition {
    // (total size, count of new squares) per block
    let mut blocks: Vec<(u32, u32)> = omega.parts().iter().map(|&p| (p, 0)).collect();
    let mut size = omega.size() as u64;
    for _ in 0..extra {
        let denom = size as f64 + params.theta;
        let new_mass = (params.theta + blocks.len() as f64 * params.alpha) / denom;
        let mut u = rng.random_range(0.0..1.0) - new_mass;
        if u < 0.0 {
            blocks.push((1, 1));
        } else {
            let mut joined = false;
            for b in blocks.iter_mut() {
                u -= (b.0 as f64 - params.alpha) / denom;
                if u < 0.0 {
                    b.0 += 1;
                    b.1 += 1;
                    joined = true;
                    break;
                }
            }
            if !joined {
                let last = blocks.last_mut().unwrap();
                last.0 += 1;
                last.1 += 1;
            }
        }
        size += 1;
    }
    Partition::from_unsorted(blocks.into_iter().map(|(_, c)| c).filter(|&c| c > 0).collect())
}

/// One transition of the coagulation kernel: draw γ of size `extra` jointly
/// with the merge target by sampling μ proportional to 𝓗(ω, γ | μ) P(μ)
/// over all γ of that size. Equivalent in law to `crp_conditional_simulate`.
pub fn coag_kernel<R: Rng + ?Sized>(
    params: &EPParams,
    omega: &Partition,
    extra: u32,
    rng: &mut R,
) -> Partition {
    let mut targets: Vec<Partition> = Vec::new();
    let mut weights = Vec::new();
    for gamma in Partition::all_of_size(extra) {
        for w in coag_with_coefficients(omega, &gamma) {
            weights.push(w.coefficient.ln() + ln_psf(params, &w.target));
            targets.push(w.target);
        }
    }
    let mut total = LogSum::new();
    for &w in &weights {
        total.add(w);
    }
    let norm = total.value();
    let mut u = rng.random_range(0.0..1.0);
    for (t, &w) in targets.iter().zip(&weights) {
        u -= (w - norm).exp();
        if u < 0.0 {
            return t.clone();
        }
    }
    targets.last().cloned().unwrap_or_else(|| omega.clone())
}

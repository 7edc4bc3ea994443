//! The partition-valued dual of the Poisson–Dirichlet diffusion.
//!
//! The dual is a pure-death process on partitions: from λ, single squares
//! are deleted uniformly at rate |λ|(θ + |λ| − 1)/2. Its block-count
//! marginal is the classical death chain with the same rates, and the
//! frequency-space diffusion started from the entrance boundary at ∞
//! induces the entrance law `entrance_prob`. Transition probabilities
//! factor as d_{|λ|,|ω|}(t) · 𝓗(ω | λ), which `dual_transition` exploits.
//!
//! `Propagator` pushes weighted mixtures of partitions forward over a time
//! step, either exactly (enumerating every sub-partition) or by Monte
//! Carlo when supports grow too large.

use crate::coag::{coag_marginal_coefficient, sub_coefficients};
use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, ln_rising, LogSum};
use crate::partition::Partition;
use rand::Rng;
use std::cell::RefCell;
use std::collections::BTreeMap;

/// Death rate out of level k: k(θ + k − 1)/2.
pub fn death_rate(theta: f64, k: u32) -> f64 {
    let k = k as f64;
    k * (theta + k - 1.0) / 2.0
}

/// Options controlling the entrance-law evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EntranceOpts {
    /// Relative tail tolerance for truncating the alternating series.
    pub tol: f64,
    /// Maximum number of series terms before giving up.
    pub max_terms: u32,
}

impl Default for EntranceOpts {
    fn default() -> Self {
        EntranceOpts {
            tol: 1e-12,
            max_terms: 10_000,
        }
    }
}

/// d_n^θ(t): probability that the death chain coming down from infinity
/// occupies level n at time t > 0.
///
/// The alternating series cancels catastrophically as t → 0; when the
/// running peak magnitude exceeds the result by more than ~34 nats the
/// double-precision answer carries no correct digits, and the evaluation
/// falls back to a finite-start approximation from a level high enough
/// that the truncation error is negligible.
pub fn entrance_prob(theta: f64, n: u32, t: f64, opts: &EntranceOpts) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!(
            "entrance law requires t > 0, got {t}"
        )));
    }
    match entrance_series(theta, n, t, opts) {
        Some(p) => Ok(p),
        None => {
            let row = entrance_fallback_row(theta, t)?;
            Ok(row.get(n as usize).copied().unwrap_or(0.0))
        }
    }
}

/// Direct evaluation of the alternating entrance series; `None` when the
/// cancellation check fails.
fn entrance_series(theta: f64, n: u32, t: f64, opts: &EntranceOpts) -> Option<f64> {
    let n_ = n as f64;
    let mut pos = LogSum::new();
    let mut neg = LogSum::new();
    let mut peak = f64::NEG_INFINITY;
    let mut k = n;
    let mut converged = false;
    while k < n + opts.max_terms {
        let k_ = k as f64;
        // ln |(−1)^{k−n} (2k + θ − 1) (θ + n)_{(k−1)} / (n! (k−n)!)|.
        // The k = n = 0 term reads (θ − 1)·(θ)_{(−1)} with (a)_{(−1)} =
        // 1/(a − 1): identically 1 for every θ.
        let ln_mag = if k == 0 {
            0.0
        } else {
            -death_rate(theta, k) * t + (2.0 * k_ + theta - 1.0).ln()
                + ln_rising(theta + n_, (k - 1) as u64)
                - ln_factorial(n as u64)
                - ln_factorial((k - n) as u64)
        };
        peak = peak.max(ln_mag);
        if (k - n) % 2 == 0 {
            pos.add(ln_mag);
        } else {
            neg.add(ln_mag);
        }
        // Terms eventually decay doubly exponentially in k; stop once the
        // current term is far below the accumulated magnitude.
        if k > n + 2 && ln_mag < pos.value().max(neg.value()) + opts.tol.ln() {
            converged = true;
            break;
        }
        k += 1;
    }
    if !converged {
        return None;
    }
    let (lp, ln) = (pos.value(), neg.value());
    if ln >= lp {
        return None; // negative result: pure cancellation noise
    }
    let diff = 1.0 - (ln - lp).exp();
    if diff <= 0.0 {
        return None;
    }
    let result = lp + diff.ln();
    // Cancellation beyond ~27 nats leaves the surviving digits dominated
    // by the accumulated rounding noise of the individual terms.
    if peak - result > 27.0 {
        return None;
    }
    Some(result.exp())
}

/// Expected passage time of the death chain from ∞ down to level l:
/// Σ_{k>l} 1/rate(k). Its standard deviation is O(l^{−3/2}), so shifting
/// time by this mean accounts for almost all of the finite-start error.
fn passage_time_from_infinity(theta: f64, l: u32) -> f64 {
    let mut acc = 0.0;
    let mut k = l + 1;
    loop {
        let term = 1.0 / death_rate(theta, k);
        acc += term;
        if term < 1e-14 {
            return acc;
        }
        k += 1;
    }
}

/// Finite-start stand-in for the entrance law: run the death chain from a
/// level L the chain from infinity passes almost instantly, over a window
/// shortened by the mean passage time from ∞ to L. Accurate to a few parts
/// in 10^5 even in the extreme lower tail.
fn entrance_fallback_row(theta: f64, t: f64) -> Result<Vec<f64>> {
    let start = ((25.0 / t).ceil() as u32).clamp(300, 4000);
    let shift = passage_time_from_infinity(theta, start);
    if t <= 3.0 * shift {
        return Err(Error::NumericalInstability(format!(
            "entrance law at t = {t} needs a start above the supported cap"
        )));
    }
    death_row(theta, start, t - shift)
}

/// Distribution of the entrance-law level at a fixed time, with sampling.
#[derive(Debug, Clone)]
pub struct EntranceDistribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl EntranceDistribution {
    /// Tabulates d_n^θ(t) for n = 0, 1, … until the tail mass drops below
    /// `tail_tol`.
    pub fn build(theta: f64, t: f64, tail_tol: f64) -> Result<Self> {
        let opts = EntranceOpts::default();
        let mut fallback: Option<Vec<f64>> = None;
        let mut probs = Vec::new();
        let mut mass = 0.0;
        let mut n = 0u32;
        loop {
            let p = match &fallback {
                Some(row) => row.get(n as usize).copied().unwrap_or(0.0),
                None => match entrance_series(theta, n, t, &opts) {
                    Some(p) => p,
                    None => {
                        let row = entrance_fallback_row(theta, t)?;
                        let p = row.get(n as usize).copied().unwrap_or(0.0);
                        fallback = Some(row);
                        p
                    }
                },
            };
            probs.push(p);
            mass += p;
            // the level distribution is unimodal: safe to stop once past
            // the mode with negligible remaining mass
            if mass > 1.0 - tail_tol && n >= 1 {
                break;
            }
            let exhausted = fallback
                .as_ref()
                .is_some_and(|row| n as usize + 1 >= row.len());
            if exhausted || n > 100_000 {
                return Err(Error::NumericalInstability(
                    "entrance distribution failed to accumulate mass".into(),
                ));
            }
            n += 1;
        }
        let total: f64 = probs.iter().sum();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &mut probs {
            *p /= total;
            acc += *p;
            cdf.push(acc);
        }
        Ok(EntranceDistribution { probs, cdf })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u = rng.random_range(0.0..1.0);
        match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) | Err(i) => (i.min(self.cdf.len() - 1)) as u32,
        }
    }
}

/// Block-count transition row d_{l,·}(t): probabilities of being at each
/// level n ∈ {0, …, l} at time t when started from level l.
///
/// Uses the spectral product formula term-by-term in the log domain; if
/// that shows signs of cancellation (negative entries or a row sum off by
/// more than 1e−8) or θ ≤ 0 makes rates collide, falls back to
/// uniformization of the explicit generator.
pub fn death_row(theta: f64, l: u32, t: f64) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidParams(format!("negative time {t}")));
    }
    if t == 0.0 {
        let mut row = vec![0.0; l as usize + 1];
        row[l as usize] = 1.0;
        return Ok(row);
    }
    if theta > 0.0 {
        if let Some(row) = death_row_spectral(theta, l, t) {
            return Ok(row);
        }
    }
    death_row_uniformized(theta, l, t)
}

fn death_row_spectral(theta: f64, l: u32, t: f64) -> Option<Vec<f64>> {
    let rates: Vec<f64> = (0..=l).map(|k| death_rate(theta, k)).collect();
    let mut row = Vec::with_capacity(l as usize + 1);
    for n in 0..=l {
        let mut pos = LogSum::new();
        let mut neg = LogSum::new();
        for k in n..=l {
            // ln ∏_{j=n+1..l} λ_j − λ_k t − ln ∏_{j≠k, n≤j≤l} |λ_j − λ_k|
            let mut ln_mag = -rates[k as usize] * t;
            for j in (n + 1)..=l {
                ln_mag += rates[j as usize].ln();
            }
            for j in n..=l {
                if j != k {
                    ln_mag -= (rates[j as usize] - rates[k as usize]).abs().ln();
                }
            }
            if (k - n) % 2 == 0 {
                pos.add(ln_mag);
            } else {
                neg.add(ln_mag);
            }
        }
        let (lp, ln_) = (pos.value(), neg.value());
        if ln_ >= lp {
            return None;
        }
        let v = (lp + (1.0 - (ln_ - lp).exp()).ln()).exp();
        if !v.is_finite() || v < 0.0 {
            return None;
        }
        row.push(v);
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return None;
    }
    Some(row)
}

/// Row of e^{tQ} for the pure-death generator via uniformization:
/// e^{tQ} = Σ_m Pois(m; qt) M^m with M = I + Q/q.
fn death_row_uniformized(theta: f64, l: u32, t: f64) -> Result<Vec<f64>> {
    let dim = l as usize + 1;
    let q = (0..=l)
        .map(|k| death_rate(theta, k))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut v = vec![0.0; dim];
    v[l as usize] = 1.0;
    let mut result = vec![0.0; dim];
    let qt = q * t;
    // Poisson weights in the log domain, iterated until the tail is spent.
    let mut ln_w = -qt;
    let mut remaining = 1.0f64;
    let max_m = (qt + 12.0 * qt.sqrt() + 50.0) as u64;
    for m in 0..=max_m {
        let w = ln_w.exp();
        for i in 0..dim {
            result[i] += w * v[i];
        }
        remaining -= w;
        if remaining < 1e-15 {
            break;
        }
        // v ← v M (death moves k → k−1 with probability rate/q)
        let mut next = vec![0.0; dim];
        for k in 0..dim {
            let r = death_rate(theta, k as u32) / q;
            next[k] += v[k] * (1.0 - r);
            if k > 0 {
                next[k - 1] += v[k] * r;
            }
        }
        v = next;
        ln_w += qt.ln() - ((m + 1) as f64).ln();
    }
    let sum: f64 = result.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::NumericalInstability(
            "uniformized death row lost all mass".into(),
        ));
    }
    for x in &mut result {
        *x /= sum;
    }
    Ok(result)
}

/// d_{l,n}(t): block-count transition probability from level l to level n.
pub fn death_finite_prob(theta: f64, l: u32, n: u32, t: f64) -> Result<f64> {
    if n > l {
        return Ok(0.0);
    }
    Ok(death_row(theta, l, t)?[n as usize])
}

/// Transition probability of the partition-valued dual:
/// P(λ → ω in time t) = d_{|λ|,|ω|}(t) · 𝓗(ω | λ), zero unless ω ≼ λ.
pub fn dual_transition(theta: f64, lambda: &Partition, omega: &Partition, t: f64) -> Result<f64> {
    if !omega.precedes(lambda) {
        return Ok(0.0);
    }
    Ok(death_finite_prob(theta, lambda.size(), omega.size(), t)?
        * coag_marginal_coefficient(omega, lambda))
}

/// One exact trajectory of the dual over [0, t]: sample the end level from
/// the block-count row, then delete that many uniformly chosen squares.
/// Equal in law to the event-by-event jump chain because square deletions
/// are exchangeable and independent of the jump times.
pub fn propagate_sample<R: Rng + ?Sized>(
    lambda: &Partition,
    row: &[f64],
    rng: &mut R,
) -> Partition {
    let mut u = rng.random_range(0.0..1.0);
    let mut target = 0u32;
    for (n, &p) in row.iter().enumerate() {
        u -= p;
        if u < 0.0 {
            target = n as u32;
            break;
        }
    }
    let mut cur = lambda.clone();
    while cur.size() > target {
        let j = rng.random_range(0..cur.size());
        // find the part containing square j under uniform labelling
        let mut acc = 0;
        let mut idx = 0;
        for (i, &p) in cur.parts().iter().enumerate() {
            acc += p;
            if j < acc {
                idx = i;
                break;
            }
        }
        cur = cur.delete_square(cur.parts()[idx]);
    }
    cur
}

/// Event-by-event simulation of the dual over [0, t] with exponential
/// holding times; slower than `propagate_sample` but makes the jump chain
/// explicit for cross-checks.
pub fn gillespie_propagate<R: Rng + ?Sized>(
    theta: f64,
    lambda: &Partition,
    t: f64,
    rng: &mut R,
) -> Partition {
    let mut cur = lambda.clone();
    let mut clock = 0.0;
    loop {
        if cur.is_empty() {
            return cur;
        }
        let rate = death_rate(theta, cur.size());
        if rate <= 0.0 {
            return cur;
        }
        clock += -rng.random_range(f64::MIN_POSITIVE..1.0).ln() / rate;
        if clock > t {
            return cur;
        }
        let j = rng.random_range(0..cur.size());
        let mut acc = 0;
        let mut idx = 0;
        for (i, &p) in cur.parts().iter().enumerate() {
            acc += p;
            if j < acc {
                idx = i;
                break;
            }
        }
        cur = cur.delete_square(cur.parts()[idx]);
    }
}

/// How a `Propagator` pushes mixtures forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Enumerate every reachable sub-partition; exact.
    Exact,
    /// Estimate the pushed-forward mixture from sampled trajectories.
    MonteCarlo {
        samples: u32,
        seed: u64,
    },
    /// Exact while the reachable support stays below `support_cap`, Monte
    /// Carlo beyond it.
    Auto {
        support_cap: usize,
        samples: u32,
        seed: u64,
    },
}

impl Default for PredictMode {
    fn default() -> Self {
        PredictMode::Auto {
            support_cap: 200,
            samples: 2000,
            seed: 0,
        }
    }
}

/// Weights below this floor are dropped before renormalisation.
pub const WEIGHT_FLOOR: f64 = 1e-15;

/// Pushes weighted partition mixtures forward through the dual process,
/// memoizing sub-partition coefficient tables and block-count rows.
pub struct Propagator {
    theta: f64,
    mode: PredictMode,
    sub_memo: RefCell<BTreeMap<Partition, Vec<(Partition, f64)>>>,
    row_memo: RefCell<BTreeMap<(u32, u64), Vec<f64>>>,
    draws: RefCell<u64>,
}

impl Propagator {
    pub fn new(theta: f64, mode: PredictMode) -> Self {
        Propagator {
            theta,
            mode,
            sub_memo: RefCell::new(BTreeMap::new()),
            row_memo: RefCell::new(BTreeMap::new()),
            draws: RefCell::new(0),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn row(&self, l: u32, t: f64) -> Result<Vec<f64>> {
        let key = (l, t.to_bits());
        if let Some(row) = self.row_memo.borrow().get(&key) {
            return Ok(row.clone());
        }
        let row = death_row(self.theta, l, t)?;
        self.row_memo.borrow_mut().insert(key, row.clone());
        Ok(row)
    }

    fn subs(&self, lambda: &Partition) -> Vec<(Partition, f64)> {
        if let Some(tab) = self.sub_memo.borrow().get(lambda) {
            return tab.clone();
        }
        let tab = sub_coefficients(lambda);
        self.sub_memo
            .borrow_mut()
            .insert(lambda.clone(), tab.clone());
        tab
    }

    /// Pushes a normalised weighted mixture forward by time t. Weights in
    /// the result are normalised; entries below `WEIGHT_FLOOR` are dropped.
    pub fn propagate(
        &self,
        mixture: &BTreeMap<Partition, f64>,
        t: f64,
    ) -> Result<BTreeMap<Partition, f64>> {
        if t == 0.0 {
            return Ok(mixture.clone());
        }
        let use_exact = match self.mode {
            PredictMode::Exact => true,
            PredictMode::MonteCarlo { .. } => false,
            PredictMode::Auto { support_cap, .. } => {
                let keys: Vec<&Partition> = mixture.keys().collect();
                crate::partition::lower_set_bounded(keys, support_cap).is_some()
            }
        };
        let mut out: BTreeMap<Partition, f64> = BTreeMap::new();
        if use_exact {
            for (lambda, &w) in mixture {
                let row = self.row(lambda.size(), t)?;
                for (omega, h) in self.subs(lambda) {
                    let p = w * row[omega.size() as usize] * h;
                    if p > 0.0 {
                        *out.entry(omega).or_default() += p;
                    }
                }
            }
        } else {
            let (samples, seed) = match self.mode {
                PredictMode::MonteCarlo { samples, seed }
                | PredictMode::Auto { samples, seed, .. } => (samples, seed),
                PredictMode::Exact => unreachable!(),
            };
            use rand::SeedableRng;
            let offset = {
                let mut d = self.draws.borrow_mut();
                let o = *d;
                *d += 1;
                o
            };
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let total_w: f64 = mixture.values().sum();
            for (lambda, &w) in mixture {
                let n = ((w / total_w) * samples as f64).round().max(1.0) as u32;
                let row = self.row(lambda.size(), t)?;
                for _ in 0..n {
                    let omega = propagate_sample(lambda, &row, &mut rng);
                    *out.entry(omega).or_default() += w / n as f64;
                }
            }
        }
        let mut total: f64 = out.values().sum();
        if !(total > 0.0) {
            return Err(Error::NumericalInstability(
                "propagated mixture lost all mass".into(),
            ));
        }
        out.retain(|_, w| *w / total >= WEIGHT_FLOOR);
        total = out.values().sum();
        for w in out.values_mut() {
            *w /= total;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense matrix exponential of the death generator by scaling and
    /// squaring, used as an oracle for the transition rows.
    fn matexp_row(theta: f64, l: u32, t: f64) -> Vec<f64> {
        let dim = l as usize + 1;
        let mut a = vec![vec![0.0f64; dim]; dim];
        for k in 1..=l as usize {
            let r = death_rate(theta, k as u32);
            a[k][k] -= r * t;
            a[k][k - 1] += r * t;
        }
        let norm: f64 = a
            .iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let s = norm.log2().ceil().max(0.0) as u32 + 4;
        let scale = 2f64.powi(-(s as i32));
        for row in &mut a {
            for x in row.iter_mut() {
                *x *= scale;
            }
        }
        // exp via Taylor to order 20 on the scaled matrix
        let mut result = vec![vec![0.0; dim]; dim];
        for (i, row) in result.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut term = result.clone();
        for order in 1..=20 {
            let mut next = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for k in 0..dim {
                    if term[i][k] != 0.0 {
                        for j in 0..dim {
                            next[i][j] += term[i][k] * a[k][j] / order as f64;
                        }
                    }
                }
            }
            for i in 0..dim {
                for j in 0..dim {
                    result[i][j] += next[i][j];
                }
            }
            term = next;
        }
        for _ in 0..s {
            let mut sq = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for k in 0..dim {
                    if result[i][k] != 0.0 {
                        for j in 0..dim {
                            sq[i][j] += result[i][k] * result[k][j];
                        }
                    }
                }
            }
            result = sq;
        }
        result[l as usize].clone()
    }

    #[test]
    fn row_matches_matrix_exponential() {
        for &(theta, l, t) in &[
            (1.5, 6u32, 0.3),
            (1.5, 12, 0.05),
            (0.75, 20, 0.2),
            (1.0, 10, 1.0),
        ] {
            let row = death_row(theta, l, t).unwrap();
            let oracle = matexp_row(theta, l, t);
            for n in 0..=l as usize {
                assert_relative_eq!(row[n], oracle[n], epsilon = 1e-9, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn row_sums_to_one_and_stays_nonnegative() {
        for &theta in &[0.5, 1.5, 3.0] {
            for &l in &[1u32, 5, 30, 120] {
                for &t in &[1e-4, 0.01, 0.1, 1.0, 10.0] {
                    let row = death_row(theta, l, t).unwrap();
                    assert!(row.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
                    assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn staying_probability_is_exponential() {
        // d_{l,l}(t) = e^{−l(θ+l−1)t/2}
        for &(theta, l, t) in &[(1.5, 4u32, 0.3), (0.8, 9, 0.1)] {
            let row = death_row(theta, l, t).unwrap();
            assert_relative_eq!(
                row[l as usize],
                (-death_rate(theta, l) * t).exp(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn rows_satisfy_chapman_kolmogorov() {
        let (theta, l) = (1.3, 8u32);
        let (s, t) = (0.17, 0.4);
        let full = death_row(theta, l, s + t).unwrap();
        let first = death_row(theta, l, s).unwrap();
        let mut composed = vec![0.0; l as usize + 1];
        for k in 0..=l {
            let second = death_row(theta, k, t).unwrap();
            for n in 0..=k as usize {
                composed[n] += first[k as usize] * second[n];
            }
        }
        for n in 0..=l as usize {
            assert_relative_eq!(composed[n], full[n], epsilon = 1e-9);
        }
    }

    #[test]
    fn entrance_series_matches_high_precision_oracle() {
        // 60-digit evaluations of the alternating series, frozen.
        let oracle: &[(f64, f64, [f64; 6])] = &[
            (
                1.0,
                0.3,
                [
                    6.572058479418667e-07,
                    6.987999972095724e-05,
                    0.001638452059699026,
                    0.014997396589522415,
                    0.06753876323042034,
                    0.16951599201215098,
                ],
            ),
            (
                1.0,
                1.0,
                [
                    0.03605475633512491,
                    0.3197914254702283,
                    0.4512349114251109,
                    0.1710805868325451,
                    0.020930960049896544,
                    0.0008935043182386319,
                ],
            ),
            (
                1.0,
                3.0,
                [
                    0.5586944422138029,
                    0.4264549789390432,
                    0.01482316306303425,
                    2.741314154863972e-05,
                    2.642557952123681e-09,
                    1.3042387931952139e-14,
                ],
            ),
            (
                1.5,
                0.3,
                [
                    2.431668238943863e-06,
                    0.00016711040651797558,
                    0.0030357528255139632,
                    0.023042794061712085,
                    0.08914229512480998,
                    0.19635133636028887,
                ],
            ),
            (
                1.5,
                1.0,
                [
                    0.07537060904754923,
                    0.3999031620149698,
                    0.4000067539296102,
                    0.113688379227451,
                    0.010673583384714781,
                    0.00035325221483506404,
                ],
            ),
        ];
        let opts = EntranceOpts::default();
        for &(theta, t, expected) in oracle {
            for (n, &e) in expected.iter().enumerate() {
                let got = entrance_prob(theta, n as u32, t, &opts).unwrap();
                assert_relative_eq!(got, e, max_relative = 1e-9, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn finite_start_fallback_tracks_the_series() {
        // Where the series is stable, the time-shifted finite-start row
        // must agree to a few parts in 10^5 even in the lower tail.
        let opts = EntranceOpts::default();
        for &(theta, t) in &[(1.0, 0.3), (1.5, 0.6)] {
            let row = entrance_fallback_row(theta, t).unwrap();
            for n in 0..10u32 {
                if let Some(series) = entrance_series(theta, n, t, &opts) {
                    assert_relative_eq!(row[n as usize], series, max_relative = 2e-4);
                }
            }
        }
    }

    #[test]
    fn entrance_distribution_is_proper_and_small_t_concentrates_high() {
        let d = EntranceDistribution::build(1.0, 0.01, 1e-10).unwrap();
        assert_relative_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let mean: f64 = d
            .probs()
            .iter()
            .enumerate()
            .map(|(n, &p)| n as f64 * p)
            .sum();
        // coming down from infinity: level ≈ 2/t for small t
        assert!(mean > 50.0, "mean level {mean}");
        let larger_t = EntranceDistribution::build(1.0, 1.0, 1e-10).unwrap();
        let mean2: f64 = larger_t
            .probs()
            .iter()
            .enumerate()
            .map(|(n, &p)| n as f64 * p)
            .sum();
        assert!(mean2 < mean);
    }

    #[test]
    fn dual_transition_rows_sum_to_one() {
        let lambda = partition![3, 2, 1];
        for &t in &[0.05, 0.5, 2.0] {
            let mut total = 0.0;
            for omega in crate::partition::lower_set([&lambda]) {
                total += dual_transition(1.2, &lambda, &omega, t).unwrap();
            }
            assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampled_propagation_matches_exact_row() {
        let theta = 1.5;
        let lambda = partition![3, 2];
        let t = 0.4;
        let row = death_row(theta, lambda.size(), t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 100_000;
        let mut counts: BTreeMap<Partition, u64> = BTreeMap::new();
        for _ in 0..trials {
            *counts
                .entry(propagate_sample(&lambda, &row, &mut rng))
                .or_default() += 1;
        }
        for omega in crate::partition::lower_set([&lambda]) {
            let p = dual_transition(theta, &lambda, &omega, t).unwrap();
            let freq = *counts.get(&omega).unwrap_or(&0) as f64 / trials as f64;
            assert!(
                (freq - p).abs() < 5.0 * (p / trials as f64).sqrt() + 2e-3,
                "{omega}: {freq} vs {p}"
            );
        }
    }

    #[test]
    fn gillespie_agrees_with_shortcut_sampler() {
        let theta = 0.9;
        let lambda = partition![2, 2, 1];
        let t = 0.5;
        let row = death_row(theta, lambda.size(), t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 60_000;
        let mut a: BTreeMap<Partition, u64> = BTreeMap::new();
        let mut b: BTreeMap<Partition, u64> = BTreeMap::new();
        for _ in 0..trials {
            *a.entry(gillespie_propagate(theta, &lambda, t, &mut rng))
                .or_default() += 1;
            *b.entry(propagate_sample(&lambda, &row, &mut rng))
                .or_default() += 1;
        }
        let mut tv = 0.0;
        for omega in crate::partition::lower_set([&lambda]) {
            let fa = *a.get(&omega).unwrap_or(&0) as f64 / trials as f64;
            let fb = *b.get(&omega).unwrap_or(&0) as f64 / trials as f64;
            tv += (fa - fb).abs();
        }
        assert!(tv / 2.0 < 0.01, "total variation {tv}");
    }

    #[test]
    fn exact_propagator_matches_direct_transition() {
        let prop = Propagator::new(1.2, PredictMode::Exact);
        let mut mix = BTreeMap::new();
        mix.insert(partition![3, 1], 0.6);
        mix.insert(partition![2, 2], 0.4);
        let out = prop.propagate(&mix, 0.3).unwrap();
        for (omega, &w) in &out {
            let expected = 0.6 * dual_transition(1.2, &partition![3, 1], omega, 0.3).unwrap()
                + 0.4 * dual_transition(1.2, &partition![2, 2], omega, 0.3).unwrap();
            assert_relative_eq!(w, expected, epsilon = 1e-9);
        }
        assert_relative_eq!(out.values().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_propagator_is_close_to_exact() {
        let exact = Propagator::new(1.0, PredictMode::Exact);
        let mc = Propagator::new(
            1.0,
            PredictMode::MonteCarlo {
                samples: 50_000,
                seed: 42,
            },
        );
        let mut mix = BTreeMap::new();
        mix.insert(partition![4, 2], 1.0);
        let a = exact.propagate(&mix, 0.5).unwrap();
        let b = mc.propagate(&mix, 0.5).unwrap();
        let mut tv = 0.0;
        for (omega, &w) in &a {
            tv += (w - b.get(omega).copied().unwrap_or(0.0)).abs();
        }
        assert!(tv / 2.0 < 0.01, "total variation {tv}");
    }
}

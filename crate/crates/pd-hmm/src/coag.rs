//! Coagulation sets and their hypergeometric coefficients.
//!
//! Merging two partitions ω and γ produces the coagulation set coag(ω, γ);
//! each merged partition μ carries the coefficient 𝓗(ω, γ | μ), the
//! probability that a uniform split of a labelled structure with block
//! sizes μ into |ω| and |γ| elements induces exactly the sub-partitions
//! ω and γ. The marginal 𝓗(ω | λ) is the analogous probability that a
//! uniform |ω|-subsample of a λ-structure induces ω.
//!
//! Coefficients are exact rationals up to `RATIONAL_THRESHOLD` total
//! squares and log-domain floats above, so small cases can be checked
//! against brute-force oracles while large cases stay feasible.

use crate::numeric::{ln_binomial, ln_factorial, LogSum};
use crate::partition::{big_binomial, factorial, Partition};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// Above this total size (|ω| + |γ|), coefficients switch from exact
/// rational arithmetic to log-domain floats.
pub const RATIONAL_THRESHOLD: u32 = 64;

/// One element of a coagulation set together with its coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCoagulation {
    /// The merged partition μ, of size |ω| + |γ|.
    pub target: Partition,
    /// 𝓗(ω, γ | μ) ∈ (0, 1].
    pub coefficient: f64,
}

/// The multiplicative pieces of one split-pattern term, shared by the
/// rational and log-domain evaluation paths. A term evaluates to
/// ∏ fact_num! / ∏ fact_den! · ∏ binom(n, k)^e.
struct TermShape {
    fact_num: Vec<u32>,
    fact_den: Vec<u32>,
    binoms: Vec<(u32, u32, u32)>,
}

impl TermShape {
    fn ln(&self) -> f64 {
        let mut acc = 0.0;
        for &n in &self.fact_num {
            acc += ln_factorial(n as u64);
        }
        for &n in &self.fact_den {
            acc -= ln_factorial(n as u64);
        }
        for &(n, k, e) in &self.binoms {
            acc += e as f64 * ln_binomial(n as u64, k as u64);
        }
        acc
    }

    fn rational(&self) -> BigRational {
        let mut num = BigInt::one();
        let mut den = BigInt::one();
        for &n in &self.fact_num {
            num *= BigInt::from(factorial(n as u64));
        }
        for &n in &self.fact_den {
            den *= BigInt::from(factorial(n as u64));
        }
        for &(n, k, e) in &self.binoms {
            let b = BigInt::from(big_binomial(n as u64, k as u64));
            for _ in 0..e {
                num *= &b;
            }
        }
        BigRational::new(num, den)
    }
}

fn classes(p: &Partition) -> Vec<(u32, u32)> {
    p.multiplicities().into_iter().collect()
}

/// Enumerates every merge pattern of ω and γ. A pattern chooses, for each
/// pair of part values (a, b), how many a-parts of ω merge with b-parts of
/// γ; the remaining parts stay whole. Each pattern determines a merged
/// partition μ and one term of the composition sum defining 𝓗(ω, γ | μ);
/// patterns are disjoint, so summing terms per μ gives the coefficient
/// (up to the global 1/binom(|ω|+|γ|, |ω|) factor handled by callers).
fn enumerate_pair_patterns<F: FnMut(Partition, TermShape)>(
    omega: &Partition,
    gamma: &Partition,
    mut emit: F,
) {
    let oc = classes(omega);
    let gc = classes(gamma);
    let mut rem_o: Vec<u32> = oc.iter().map(|&(_, c)| c).collect();
    let mut rem_g: Vec<u32> = gc.iter().map(|&(_, c)| c).collect();
    let cells: Vec<(usize, usize)> = (0..oc.len())
        .flat_map(|i| (0..gc.len()).map(move |j| (i, j)))
        .collect();
    // k[cell] = number of (a_i, b_j) merges.
    let mut k = vec![0u32; cells.len()];

    fn rec<F: FnMut(Partition, TermShape)>(
        cell: usize,
        cells: &[(usize, usize)],
        oc: &[(u32, u32)],
        gc: &[(u32, u32)],
        rem_o: &mut Vec<u32>,
        rem_g: &mut Vec<u32>,
        k: &mut Vec<u32>,
        emit: &mut F,
    ) {
        if cell == cells.len() {
            // Group split types by merged part value v: merged (a, b) pairs,
            // free ω parts (z = v) and free γ parts (y = v) are distinct types.
            let mut per_value: BTreeMap<u32, (u32, Vec<u32>)> = BTreeMap::new();
            let mut shape = TermShape {
                fact_num: Vec::new(),
                fact_den: Vec::new(),
                binoms: Vec::new(),
            };
            for (c, &(i, j)) in cells.iter().enumerate() {
                if k[c] > 0 {
                    let (a, b) = (oc[i].0, gc[j].0);
                    let entry = per_value.entry(a + b).or_default();
                    entry.0 += k[c];
                    entry.1.push(k[c]);
                    shape.binoms.push((a + b, a, k[c]));
                }
            }
            for (i, &(a, _)) in oc.iter().enumerate() {
                if rem_o[i] > 0 {
                    let entry = per_value.entry(a).or_default();
                    entry.0 += rem_o[i];
                    entry.1.push(rem_o[i]);
                }
            }
            for (j, &(b, _)) in gc.iter().enumerate() {
                if rem_g[j] > 0 {
                    let entry = per_value.entry(b).or_default();
                    entry.0 += rem_g[j];
                    entry.1.push(rem_g[j]);
                }
            }
            let mut parts = Vec::new();
            for (v, (c_v, type_counts)) in &per_value {
                for _ in 0..*c_v {
                    parts.push(*v);
                }
                shape.fact_num.push(*c_v);
                shape.fact_den.extend(type_counts.iter().copied());
            }
            emit(Partition::from_unsorted(parts), shape);
            return;
        }
        let (i, j) = cells[cell];
        let max = rem_o[i].min(rem_g[j]);
        for kk in 0..=max {
            rem_o[i] -= kk;
            rem_g[j] -= kk;
            k[cell] = kk;
            rec(cell + 1, cells, oc, gc, rem_o, rem_g, k, emit);
            rem_o[i] += kk;
            rem_g[j] += kk;
            k[cell] = 0;
        }
    }

    rec(
        0, &cells, &oc, &gc, &mut rem_o, &mut rem_g, &mut k, &mut emit,
    );
}

/// Every μ ∈ coag(ω, γ) with ln 𝓗(ω, γ | μ), in deterministic order.
pub fn coag_log_coefficients(omega: &Partition, gamma: &Partition) -> Vec<(Partition, f64)> {
    let ln_choose = ln_binomial(
        (omega.size() + gamma.size()) as u64,
        omega.size() as u64,
    );
    let mut acc: BTreeMap<Partition, LogSum> = BTreeMap::new();
    enumerate_pair_patterns(omega, gamma, |mu, shape| {
        acc.entry(mu).or_insert_with(LogSum::new).add(shape.ln());
    });
    acc.into_iter()
        .map(|(mu, s)| (mu, s.value() - ln_choose))
        .collect()
}

/// Every μ ∈ coag(ω, γ) with 𝓗(ω, γ | μ) as an exact rational.
pub fn coag_with_coefficients_rational(
    omega: &Partition,
    gamma: &Partition,
) -> Vec<(Partition, BigRational)> {
    let choose = BigRational::from_integer(BigInt::from(big_binomial(
        (omega.size() + gamma.size()) as u64,
        omega.size() as u64,
    )));
    let mut acc: BTreeMap<Partition, BigRational> = BTreeMap::new();
    enumerate_pair_patterns(omega, gamma, |mu, shape| {
        let entry = acc.entry(mu).or_insert_with(BigRational::zero);
        *entry += shape.rational();
    });
    acc.into_iter().map(|(mu, r)| (mu, r / &choose)).collect()
}

/// Every μ ∈ coag(ω, γ) with its coefficient, exact-rational below
/// `RATIONAL_THRESHOLD` total squares and log-domain above.
pub fn coag_with_coefficients(omega: &Partition, gamma: &Partition) -> Vec<WeightedCoagulation> {
    if omega.size() + gamma.size() <= RATIONAL_THRESHOLD {
        coag_with_coefficients_rational(omega, gamma)
            .into_iter()
            .map(|(target, r)| WeightedCoagulation {
                target,
                coefficient: rational_to_f64(&r),
            })
            .collect()
    } else {
        coag_log_coefficients(omega, gamma)
            .into_iter()
            .map(|(target, ln)| WeightedCoagulation {
                target,
                coefficient: ln.exp(),
            })
            .collect()
    }
}

/// 𝓗(ω, γ | μ); zero when μ ∉ coag(ω, γ).
pub fn hyper_coefficient(omega: &Partition, gamma: &Partition, mu: &Partition) -> f64 {
    coag_with_coefficients(omega, gamma)
        .into_iter()
        .find(|w| &w.target == mu)
        .map(|w| w.coefficient)
        .unwrap_or(0.0)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    // Scale so the integer quotient carries ~64 significant bits, then
    // undo the scaling in the exponent. This stays accurate even when
    // numerator and denominator individually overflow f64.
    if r.numer().is_zero() {
        return 0.0;
    }
    let num = r.numer();
    let den = r.denom();
    let e = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if e >= 0 {
        (num << e as u64) / den
    } else {
        num / (den << (-e) as u64)
    };
    let q = i128::try_from(&q).map(|v| v as f64).unwrap_or_else(|_| {
        // |q| has at most ~65 bits plus rounding slack; widen via string
        // only in the unreachable fallback.
        q.to_string().parse::<f64>().unwrap()
    });
    q * 2f64.powi(-e as i32)
}

/// Enumerates sub-sampling patterns of λ: for each part value class of λ,
/// a multiset choice of how many squares survive in each part. Emits the
/// induced sub-partition ω and one term of the composition sum for
/// 𝓗(ω | λ) (again up to the global binomial factor).
fn enumerate_sub_patterns<F: FnMut(Partition, TermShape)>(
    lambda: &Partition,
    constraint: Option<&Partition>,
    mut emit: F,
) {
    let lc = classes(lambda);
    // remaining multiplicity of each ω part value still to be produced
    let mut want: BTreeMap<u32, u32> = match constraint {
        Some(w) => w.multiplicities(),
        None => BTreeMap::new(),
    };
    let constrained = constraint.is_some();
    let mut omega_parts: Vec<u32> = Vec::new();
    let mut shape = TermShape {
        fact_num: Vec::new(),
        fact_den: Vec::new(),
        binoms: Vec::new(),
    };

    // Per class (v, c): choose counts m_u of parts keeping u squares, u
    // descending from v to 0, Σ m_u = c.
    fn per_class<F: FnMut(Partition, TermShape)>(
        class: usize,
        u: u32,
        left: u32,
        lc: &[(u32, u32)],
        want: &mut BTreeMap<u32, u32>,
        constrained: bool,
        omega_parts: &mut Vec<u32>,
        shape: &mut TermShape,
        emit: &mut F,
    ) {
        let (v, c) = lc[class];
        if left == 0 || u == 0 {
            if u == 0 && left > 0 {
                // remaining parts keep zero squares
                shape.fact_den.push(left);
            }
            let done_den = u == 0 && left > 0;
            shape.fact_num.push(c);
            next_class(class + 1, lc, want, constrained, omega_parts, shape, emit);
            shape.fact_num.pop();
            if done_den {
                shape.fact_den.pop();
            }
            return;
        }
        let cap = if constrained {
            if u == v {
                // keeping a whole part of size v still produces an ω part v
                left.min(want.get(&v).copied().unwrap_or(0))
            } else {
                left.min(want.get(&u).copied().unwrap_or(0))
            }
        } else {
            left
        };
        for m in 0..=cap {
            if m > 0 {
                if constrained {
                    *want.get_mut(&u).unwrap() -= m;
                }
                for _ in 0..m {
                    omega_parts.push(u);
                }
                shape.fact_den.push(m);
                if u < v {
                    shape.binoms.push((v, u, m));
                }
            }
            per_class(
                class,
                u - 1,
                left - m,
                lc,
                want,
                constrained,
                omega_parts,
                shape,
                emit,
            );
            if m > 0 {
                if u < v {
                    shape.binoms.pop();
                }
                shape.fact_den.pop();
                for _ in 0..m {
                    omega_parts.pop();
                }
                if constrained {
                    *want.get_mut(&u).unwrap() += m;
                }
            }
        }
    }

    fn next_class<F: FnMut(Partition, TermShape)>(
        class: usize,
        lc: &[(u32, u32)],
        want: &mut BTreeMap<u32, u32>,
        constrained: bool,
        omega_parts: &mut Vec<u32>,
        shape: &mut TermShape,
        emit: &mut F,
    ) {
        if class == lc.len() {
            if constrained && want.values().any(|&m| m > 0) {
                return;
            }
            let omega = Partition::from_unsorted(omega_parts.clone());
            emit(
                omega,
                TermShape {
                    fact_num: shape.fact_num.clone(),
                    fact_den: shape.fact_den.clone(),
                    binoms: shape.binoms.clone(),
                },
            );
            return;
        }
        let (v, c) = lc[class];
        per_class(
            class, v, c, lc, want, constrained, omega_parts, shape, emit,
        );
    }

    next_class(
        0,
        &lc,
        &mut want,
        constrained,
        &mut omega_parts,
        &mut shape,
        &mut emit,
    );
}

/// 𝓗(ω | λ): the probability that a uniform |ω|-subsample of a labelled
/// structure with block sizes λ induces sub-partition ω. Zero unless ω ≼ λ.
pub fn coag_marginal_coefficient(omega: &Partition, lambda: &Partition) -> f64 {
    if !omega.precedes(lambda) {
        return 0.0;
    }
    if lambda.size() <= RATIONAL_THRESHOLD {
        return rational_to_f64(&coag_marginal_coefficient_rational(omega, lambda));
    }
    let ln_choose = ln_binomial(lambda.size() as u64, omega.size() as u64);
    let mut acc = LogSum::new();
    enumerate_sub_patterns(lambda, Some(omega), |_, shape| {
        acc.add(shape.ln());
    });
    (acc.value() - ln_choose).exp()
}

pub fn coag_marginal_coefficient_rational(omega: &Partition, lambda: &Partition) -> BigRational {
    if !omega.precedes(lambda) {
        return BigRational::zero();
    }
    let choose = BigRational::from_integer(BigInt::from(big_binomial(
        lambda.size() as u64,
        omega.size() as u64,
    )));
    let mut acc = BigRational::zero();
    enumerate_sub_patterns(lambda, Some(omega), |_, shape| {
        acc += shape.rational();
    });
    acc / choose
}

/// All sub-partitions ω ≼ λ with 𝓗(ω | λ), in one enumeration pass.
/// This is the support/coefficient table of the dual transition row
/// started at λ.
pub fn sub_coefficients(lambda: &Partition) -> Vec<(Partition, f64)> {
    let n = lambda.size() as u64;
    let mut acc: BTreeMap<Partition, LogSum> = BTreeMap::new();
    enumerate_sub_patterns(lambda, None, |omega, shape| {
        acc.entry(omega).or_insert_with(LogSum::new).add(shape.ln());
    });
    acc.into_iter()
        .map(|(omega, s)| {
            let ln_choose = ln_binomial(n, omega.size() as u64);
            (omega, (s.value() - ln_choose).exp())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition;
    use crate::partition::lower_set;
    use approx::assert_relative_eq;
    use num_bigint::BigUint;

    fn targets(omega: &Partition, gamma: &Partition) -> Vec<Partition> {
        coag_with_coefficients(omega, gamma)
            .into_iter()
            .map(|w| w.target)
            .collect()
    }

    #[test]
    fn coag_examples_from_small_diagrams() {
        assert_eq!(
            targets(&partition![1, 1], &partition![2]),
            vec![partition![2, 1, 1], partition![3, 1]]
        );
        assert!(targets(&partition![2, 1, 1], &partition![3, 2, 1, 1])
            .contains(&partition![4, 3, 2, 1, 1]));
        let trivial = coag_with_coefficients(&Partition::empty(), &partition![3, 1]);
        assert_eq!(trivial.len(), 1);
        assert_eq!(trivial[0].target, partition![3, 1]);
        assert_relative_eq!(trivial[0].coefficient, 1.0);
    }

    #[test]
    fn singleton_pair_splits_are_certain() {
        // Brute-force oracle: for μ=(2) the only 1/1 split gives ω=γ=(1);
        // likewise for μ=(1,1).
        let ws = coag_with_coefficients(&partition![1], &partition![1]);
        assert_eq!(ws.len(), 2);
        for w in ws {
            assert_relative_eq!(w.coefficient, 1.0, epsilon = 1e-15);
            assert!(w.target == partition![2] || w.target == partition![1, 1]);
        }
    }

    /// Brute-force split oracle: enumerate all binom(n+m, n) subsets of a
    /// labelled structure with block sizes μ and count the splits that
    /// induce (ω, γ).
    fn split_oracle(omega: &Partition, gamma: &Partition, mu: &Partition) -> BigRational {
        let total = mu.size();
        let n = omega.size();
        // assign labels 0..total to blocks of μ
        let mut block_of = Vec::new();
        for (b, &p) in mu.parts().iter().enumerate() {
            for _ in 0..p {
                block_of.push(b);
            }
        }
        let mut hits = 0u64;
        let mut count = 0u64;
        for mask in 0u64..(1 << total) {
            if mask.count_ones() != n {
                continue;
            }
            count += 1;
            let mut in_counts = vec![0u32; mu.len()];
            let mut out_counts = vec![0u32; mu.len()];
            for (lbl, &b) in block_of.iter().enumerate() {
                if mask >> lbl & 1 == 1 {
                    in_counts[b] += 1;
                } else {
                    out_counts[b] += 1;
                }
            }
            if &Partition::from_unsorted(in_counts) == omega
                && &Partition::from_unsorted(out_counts) == gamma
            {
                hits += 1;
            }
        }
        BigRational::new(BigInt::from(hits), BigInt::from(count.max(1)))
    }

    #[test]
    fn coefficients_match_brute_force_splits() {
        for (o, g) in [
            (partition![1], partition![1]),
            (partition![1, 1], partition![2]),
            (partition![2], partition![2, 1]),
            (partition![2, 1], partition![2, 1]),
            (partition![3, 1], partition![2]),
        ] {
            for (mu, coef) in coag_with_coefficients_rational(&o, &g) {
                assert_eq!(coef, split_oracle(&o, &g, &mu), "{o} {g} {mu}");
            }
        }
    }

    #[test]
    fn pair_coefficients_sum_to_one_over_splits() {
        // For every μ and split sizes (n, m): Σ_{ω,γ} 𝓗(ω,γ|μ) = 1.
        for total in 1..=7u32 {
            for mu in Partition::all_of_size(total) {
                for n in 0..=total {
                    let mut sum = BigRational::zero();
                    for omega in Partition::all_of_size(n) {
                        for gamma in Partition::all_of_size(total - n) {
                            sum += coag_with_coefficients_rational(&omega, &gamma)
                                .into_iter()
                                .filter(|(m, _)| m == &mu)
                                .map(|(_, c)| c)
                                .sum::<BigRational>();
                        }
                    }
                    assert_eq!(sum, BigRational::one(), "mu={mu} n={n}");
                }
            }
        }
    }

    #[test]
    fn pair_coefficients_are_symmetric() {
        for (o, g) in [
            (partition![2, 1], partition![3]),
            (partition![1, 1, 1], partition![2, 2]),
            (partition![4, 2], partition![2, 1]),
        ] {
            let ab = coag_with_coefficients_rational(&o, &g);
            let ba = coag_with_coefficients_rational(&g, &o);
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn marginal_examples() {
        for lambda in Partition::all_of_size(4) {
            assert_relative_eq!(
                coag_marginal_coefficient(&partition![1], &lambda),
                1.0,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(
            coag_marginal_coefficient(&partition![2], &partition![2, 1]),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            coag_marginal_coefficient(&partition![1, 1], &partition![2, 1]),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(
            coag_marginal_coefficient(&partition![3], &partition![2, 1]),
            0.0
        );
    }

    #[test]
    fn marginal_rows_sum_to_one() {
        for n in 1..=7u32 {
            for lambda in Partition::all_of_size(n) {
                for k in 0..=n {
                    let sum: BigRational = Partition::all_of_size(k)
                        .iter()
                        .map(|w| coag_marginal_coefficient_rational(w, &lambda))
                        .sum();
                    assert_eq!(sum, BigRational::one(), "lambda={lambda} k={k}");
                }
            }
        }
    }

    #[test]
    fn sub_coefficients_agree_with_marginals() {
        for lambda in Partition::all_of_size(6) {
            let table = sub_coefficients(&lambda);
            let support: std::collections::BTreeSet<_> =
                table.iter().map(|(w, _)| w.clone()).collect();
            assert_eq!(support, lower_set([&lambda]));
            for (omega, h) in table {
                assert_relative_eq!(
                    h,
                    coag_marginal_coefficient(&omega, &lambda),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn log_and_rational_paths_agree() {
        for (o, g) in [
            (partition![3, 2, 1], partition![2, 2]),
            (partition![5, 1], partition![4, 3]),
        ] {
            let rational: BTreeMap<_, _> = coag_with_coefficients_rational(&o, &g)
                .into_iter()
                .collect();
            for (mu, ln_h) in coag_log_coefficients(&o, &g) {
                assert_relative_eq!(
                    ln_h.exp(),
                    rational_to_f64(&rational[&mu]),
                    max_relative = 1e-11
                );
            }
        }
    }

    #[test]
    fn rational_to_f64_handles_large_values() {
        let r = BigRational::new(
            BigInt::from(BigUint::from(3u32).pow(200)),
            BigInt::from(BigUint::from(2u32).pow(300)),
        );
        let expected = 200.0 * 3f64.ln() - 300.0 * 2f64.ln();
        assert_relative_eq!(rational_to_f64(&r).ln(), expected, epsilon = 1e-9);
    }
}

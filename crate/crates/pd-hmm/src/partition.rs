//! Integer partitions (Young diagrams) and their basic combinatorics.

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;
use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// A partition of a non-negative integer: non-increasing positive parts.
/// The empty partition (no parts, size 0) is a valid value.
///
/// Equality and ordering are on the canonical part sequence, so partitions
/// can be used as deterministic map keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.iter().any(|&p| p == 0) {
            return Err(Error::InvalidPartition("parts must be positive".into()));
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidPartition(
                "parts must be non-increasing".into(),
            ));
        }
        Ok(Partition { parts })
    }

    /// Builds the canonical form from arbitrary counts: zeros dropped,
    /// parts sorted non-increasing.
    pub fn from_unsorted(mut parts: Vec<u32>) -> Self {
        parts.retain(|&p| p > 0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition { parts }
    }

    pub fn empty() -> Self {
        Partition { parts: Vec::new() }
    }

    pub fn singleton() -> Self {
        Partition { parts: vec![1] }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// |π|, the number of squares in the Young diagram.
    pub fn size(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// l(π), the number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Multiplicities a_j: how many parts equal j, for each part size j
    /// present in the partition.
    pub fn multiplicities(&self) -> BTreeMap<u32, u32> {
        let mut m = BTreeMap::new();
        for &p in &self.parts {
            *m.entry(p).or_insert(0) += 1;
        }
        m
    }

    /// Young-diagram containment: true iff self fits inside `other`.
    pub fn precedes(&self, other: &Partition) -> bool {
        self.len() <= other.len()
            && self
                .parts
                .iter()
                .zip(other.parts.iter())
                .all(|(a, b)| a <= b)
    }

    /// Shrinks one part of size `j` by a square, returning the canonical
    /// result. Panics if no part of size j exists.
    pub fn delete_square(&self, j: u32) -> Partition {
        debug_assert!(self.parts.contains(&j));
        let mut parts = self.parts.clone();
        let idx = parts.iter().position(|&p| p == j).unwrap();
        if j == 1 {
            parts.remove(idx);
        } else {
            parts[idx] = j - 1;
            parts.sort_unstable_by(|a, b| b.cmp(a));
        }
        Partition { parts }
    }

    /// The number of set partitions of [|π|] with block sizes π:
    /// multinomial(|π|; π_1..π_l) / ∏_j a_j!. Exact arithmetic.
    pub fn combinatorial_coefficient(&self) -> BigUint {
        let mut c = factorial(self.size() as u64);
        for &p in &self.parts {
            c /= factorial(p as u64);
        }
        for (_, a) in self.multiplicities() {
            c /= factorial(a as u64);
        }
        c
    }

    pub fn ln_combinatorial_coefficient(&self) -> f64 {
        let mut acc = ln_factorial(self.size() as u64);
        for &p in &self.parts {
            acc -= ln_factorial(p as u64);
        }
        for (_, a) in self.multiplicities() {
            acc -= ln_factorial(a as u64);
        }
        acc
    }

    /// All partitions of n, in deterministic order.
    pub fn all_of_size(n: u32) -> Vec<Partition> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        fn rec(remaining: u32, max_part: u32, current: &mut Vec<u32>, out: &mut Vec<Partition>) {
            if remaining == 0 {
                out.push(Partition {
                    parts: current.clone(),
                });
                return;
            }
            let mut p = remaining.min(max_part);
            while p >= 1 {
                current.push(p);
                rec(remaining - p, p, current, out);
                current.pop();
                p -= 1;
            }
        }
        rec(n, n.max(1), &mut current, &mut out);
        out.sort();
        out
    }
}

pub fn factorial(n: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=n {
        acc *= i;
    }
    acc
}

pub fn big_binomial(n: u64, k: u64) -> BigUint {
    debug_assert!(k <= n);
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// One uniform square deletion: the law of the partition after removing a
/// uniformly chosen square from the Young diagram of λ.
pub fn one_step_down(lambda: &Partition) -> Result<BTreeMap<Partition, f64>> {
    if lambda.is_empty() {
        return Err(Error::InvalidPartition(
            "cannot delete a square from the empty partition".into(),
        ));
    }
    let n = lambda.size() as f64;
    let mut out = BTreeMap::new();
    for (j, a) in lambda.multiplicities() {
        let prob = (j as f64) * (a as f64) / n;
        out.insert(lambda.delete_square(j), prob);
    }
    Ok(out)
}

/// The lower set L(Λ): every partition obtainable from some λ ∈ Λ by
/// deleting squares, including ∅ and the members of Λ themselves.
pub fn lower_set<'a, I>(lambdas: I) -> BTreeSet<Partition>
where
    I: IntoIterator<Item = &'a Partition>,
{
    let mut seen: BTreeSet<Partition> = BTreeSet::new();
    let mut frontier: Vec<Partition> = Vec::new();
    for l in lambdas {
        if seen.insert(l.clone()) {
            frontier.push(l.clone());
        }
    }
    while let Some(p) = frontier.pop() {
        for (j, _) in p.multiplicities() {
            let down = p.delete_square(j);
            if seen.insert(down.clone()) {
                frontier.push(down);
            }
        }
    }
    seen
}

/// Lower-set enumeration with a size cap, for deciding whether exact
/// propagation is affordable. Returns None once the cap is exceeded.
pub fn lower_set_bounded<'a, I>(lambdas: I, cap: usize) -> Option<BTreeSet<Partition>>
where
    I: IntoIterator<Item = &'a Partition>,
{
    let mut seen: BTreeSet<Partition> = BTreeSet::new();
    let mut frontier: Vec<Partition> = Vec::new();
    for l in lambdas {
        if seen.insert(l.clone()) {
            frontier.push(l.clone());
        }
        if seen.len() > cap {
            return None;
        }
    }
    while let Some(p) = frontier.pop() {
        for (j, _) in p.multiplicities() {
            let down = p.delete_square(j);
            if seen.insert(down.clone()) {
                frontier.push(down);
            }
            if seen.len() > cap {
                return None;
            }
        }
    }
    Some(seen)
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;
    fn try_from(parts: Vec<u32>) -> Result<Self> {
        Partition::new(parts)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Vec<u32> {
        p.parts
    }
}

impl fmt::Display for Partition {
    /// Text form used in CLI arguments and JSON payloads: `[2,1,1]`, `[]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::InvalidPartition(format!("expected [..], got {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(Partition::empty());
        }
        let parts = inner
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::InvalidPartition(format!("bad part {tok:?}: {e}")))
            })
            .collect::<Result<Vec<u32>>>()?;
        Partition::new(parts)
    }
}

#[macro_export]
macro_rules! partition {
    () => { $crate::partition::Partition::empty() };
    ($($p:expr),+ $(,)?) => {
        $crate::partition::Partition::new(vec![$($p),+]).unwrap()
    };
}

//! Coalitions of federated clients and the exact combinatorics over them.
//!
//! A [`Coalition`] is a bitmask over client indices `0..n`. Internally every
//! index is 0-based; the text form used in reports and utility tables is
//! 1-based (`{1,3}`), so client `0` prints as `1`.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest supported federation size; a coalition fits one machine word.
pub const MAX_CLIENTS: usize = 64;

/// Strata at most this large are enumerated before sampling without
/// replacement; larger strata fall back to rejection sampling.
const ENUMERATE_LIMIT: u64 = 1 << 16;

pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A subset of the clients `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Coalition {
    members: u64,
    n: u8,
}

impl Coalition {
    pub fn new(n: usize, members: u64) -> Result<Self> {
        check_n(n)?;
        if members & !full_mask(n) != 0 {
            return Err(Error::InvalidCoalition(format!(
                "mask {members:#x} has members outside 1..={n}"
            )));
        }
        Ok(Self::from_bits(n, members))
    }

    /// Builds a coalition without validating the mask. Callers guarantee
    /// `n <= 64` and that no bit at or above `n` is set.
    pub(crate) fn from_bits(n: usize, members: u64) -> Self {
        debug_assert!(n <= MAX_CLIENTS && members & !full_mask(n) == 0);
        Self { members, n: n as u8 }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_bits(n, 0)
    }

    pub fn grand(n: usize) -> Self {
        Self::from_bits(n, full_mask(n))
    }

    /// Coalition from 0-based client indices.
    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        check_n(n)?;
        let mut mask = 0u64;
        for &i in members {
            if i >= n {
                return Err(Error::InvalidCoalition(format!(
                    "client index {i} out of range for n = {n}"
                )));
            }
            mask |= 1 << i;
        }
        Ok(Self::from_bits(n, mask))
    }

    pub fn bits(&self) -> u64 {
        self.members
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn size(&self) -> usize {
        self.members.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.members == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n() && self.members >> i & 1 == 1
    }

    pub fn with(&self, i: usize) -> Self {
        debug_assert!(i < self.n());
        Self::from_bits(self.n(), self.members | 1 << i)
    }

    pub fn without(&self, i: usize) -> Self {
        debug_assert!(i < self.n());
        Self::from_bits(self.n(), self.members & !(1 << i))
    }

    pub fn complement(&self) -> Self {
        Self::from_bits(self.n(), !self.members & full_mask(self.n()))
    }

    /// 0-based member indices in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.members;
        (0..self.n()).filter(move |i| bits >> i & 1 == 1)
    }

    /// Parses the canonical text form (`{1,3}`, `{}`) for `n` clients.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        check_n(n)?;
        let inner = text
            .trim()
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| {
                Error::InvalidCoalition(format!("`{text}` is not of the form {{i,j,...}}"))
            })?;
        let mut mask = 0u64;
        if inner.trim().is_empty() {
            return Ok(Self::from_bits(n, 0));
        }
        for token in inner.split(',') {
            let id: usize = token.trim().parse().map_err(|_| {
                Error::InvalidCoalition(format!("`{}` in `{text}` is not a client id", token.trim()))
            })?;
            if id == 0 || id > n {
                return Err(Error::InvalidCoalition(format!(
                    "client id {id} in `{text}` outside 1..={n}"
                )));
            }
            let bit = 1u64 << (id - 1);
            if mask & bit != 0 {
                return Err(Error::InvalidCoalition(format!(
                    "client id {id} repeated in `{text}`"
                )));
            }
            mask |= bit;
        }
        Ok(Self::from_bits(n, mask))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (pos, i) in self.members().enumerate() {
            if pos > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_CLIENTS {
        return Err(Error::InvalidArgument(format!(
            "client count {n} outside 1..={MAX_CLIENTS}"
        )));
    }
    Ok(())
}

/// All coalitions of exactly `k` of `n` clients.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Stratum {
    pub n: usize,
    pub k: usize,
}

impl Stratum {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        check_n(n)?;
        if k > n {
            return Err(Error::Domain {
                n: n as u64,
                k: k as u64,
            });
        }
        Ok(Self { n, k })
    }

    pub fn cardinality(&self) -> u64 {
        binomial(self.n as u64, self.k as u64).expect("n <= 64 never overflows")
    }

    pub fn iter(&self) -> StratumIter {
        StratumIter::new(self.n, self.k)
    }
}

/// Exact binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Err(Error::Domain { n, k });
    }
    let k_eff = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k_eff {
        // acc = C(n, j) and (n - j) * C(n, j) is divisible by (j + 1).
        acc = acc * u128::from(n - j) / u128::from(j + 1);
        if acc > u128::from(u64::MAX) {
            return Err(Error::Overflow { n, k });
        }
    }
    Ok(acc as u64)
}

/// Iterator over a stratum in ascending bitmask order (Gosper's hack).
#[derive(Clone, Debug)]
pub struct StratumIter {
    n: usize,
    next: Option<u128>,
}

impl StratumIter {
    fn new(n: usize, k: usize) -> Self {
        debug_assert!(n <= MAX_CLIENTS && k <= n);
        let first = if k == 0 { 0 } else { (1u128 << k) - 1 };
        Self {
            n,
            next: Some(first),
        }
    }
}

impl Iterator for StratumIter {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let current = self.next?;
        self.next = if current == 0 {
            None
        } else {
            let low = current & current.wrapping_neg();
            let ripple = current + low;
            let candidate = (((ripple ^ current) >> 2) / low) | ripple;
            (candidate >> self.n == 0).then_some(candidate)
        };
        Some(Coalition::from_bits(self.n, current as u64))
    }
}

/// Every coalition of size `k`, ascending by bitmask.
pub fn enumerate_stratum(n: usize, k: usize) -> Result<StratumIter> {
    Ok(Stratum::new(n, k)?.iter())
}

/// Draws one coalition uniformly from the size-`k` stratum.
pub fn sample_coalition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Coalition> {
    Stratum::new(n, k)?;
    let mask = rand::seq::index::sample(rng, n, k)
        .iter()
        .fold(0u64, |acc, i| acc | 1 << i);
    Ok(Coalition::from_bits(n, mask))
}

/// Draws `m` distinct coalitions of size `k` without replacement, returned in
/// ascending bitmask order. `m == C(n, k)` yields the whole stratum without
/// consuming randomness.
pub fn sample_stratum<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    m: u64,
    rng: &mut R,
) -> Result<Vec<Coalition>> {
    let stratum = Stratum::new(n, k)?;
    let size = stratum.cardinality();
    if m > size {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} distinct coalitions from a stratum of {size}"
        )));
    }
    if m == size {
        return Ok(stratum.iter().collect());
    }
    if size <= ENUMERATE_LIMIT {
        let all: Vec<Coalition> = stratum.iter().collect();
        let mut picked: Vec<Coalition> = rand::seq::index::sample(rng, all.len(), m as usize)
            .iter()
            .map(|idx| all[idx])
            .collect();
        picked.sort_unstable();
        return Ok(picked);
    }
    let mut picked = BTreeSet::new();
    while (picked.len() as u64) < m {
        picked.insert(sample_coalition(n, k, rng)?);
    }
    Ok(picked.into_iter().collect())
}

/// Uniformly random ordering of the clients `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Calls `visit` once for each of the `n!` orderings of `0..n` (Heap's
/// algorithm, first ordering is the identity).
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    visit(&order);
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(counters[i], i);
            }
            visit(&order);
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
}

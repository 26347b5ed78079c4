//! Importance-pruned estimators built on the observation that small
//! coalitions carry most of the marginal-contribution Shapley value.
//!
//! [`k_greedy`] keeps only coalitions of at most `K` clients. [`ipss`] spends
//! a budget `γ` on every coalition up to the largest size `k*` that fits and
//! uses the remaining rounds on a client-balanced sample of size-`k* + 1`
//! coalitions.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{binomial, enumerate_stratum, Coalition, Stratum};
use crate::error::{Error, Result};
use crate::utility::{Memoized, UtilityOracle};
use crate::valuation::Valuation;

/// How the IPSS budget splits into full strata and extra rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpssBudget {
    pub n: usize,
    pub gamma: u64,
    /// Largest `k` with `Σ_{j<=k} C(n, j) <= gamma`.
    pub k_star: usize,
    /// `gamma - Σ_{j<=k*} C(n, j)`.
    pub extra: u64,
}

pub fn k_star(n: usize, gamma: u64) -> Result<IpssBudget> {
    if gamma == 0 {
        return Err(Error::InvalidArgument(
            "gamma must be at least 1 so the empty coalition fits".into(),
        ));
    }
    Stratum::new(n, 0)?;
    let mut cumulative: u128 = 0;
    let mut best = (0, 1u128);
    for k in 0..=n {
        cumulative += u128::from(binomial(n as u64, k as u64)?);
        if cumulative > u128::from(gamma) {
            break;
        }
        best = (k, cumulative);
    }
    Ok(IpssBudget {
        n,
        gamma,
        k_star: best.0,
        extra: (u128::from(gamma) - best.1) as u64,
    })
}

/// Denominator applied to a marginal contribution with `|S| = s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyWeights {
    /// `n · C(n-1, s)`, the marginal-contribution Shapley weight; `K = n`
    /// reproduces the exact value.
    #[default]
    Shapley,
    /// `n · C(n, s)`, as the K-Greedy listing prints it.
    PrintedListing,
}

/// Options for [`k_greedy_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KGreedyOptions {
    pub weights: GreedyWeights,
    /// Refuse when more than this many coalitions would be evaluated.
    pub max_evaluations: u64,
}

impl Default for KGreedyOptions {
    fn default() -> Self {
        Self {
            weights: GreedyWeights::Shapley,
            max_evaluations: 1 << 22,
        }
    }
}

/// Utilities of every coalition with at most `max_size` members, indexed by
/// bitmask through the returned lookup.
fn evaluate_small_strata<O: UtilityOracle>(
    memo: &Memoized<O>,
    max_size: usize,
) -> Result<std::collections::HashMap<u64, f64>> {
    let n = memo.n();
    let coalitions: Vec<Coalition> = (0..=max_size)
        .map(|k| enumerate_stratum(n, k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let utilities: Vec<f64> = coalitions
        .par_iter()
        .map(|&s| memo.evaluate(s))
        .collect::<Result<_>>()?;
    Ok(coalitions.iter().map(Coalition::bits).zip(utilities).collect())
}

/// Σ over `S ⊆ N \ {i}` with `|S| < limit` of `(U(S ∪ {i}) - U(S)) / C(n-1, |S|)`
/// (or `C(n, |S|)` with the printed weights), stratum by stratum.
fn small_strata_sum(
    utilities: &std::collections::HashMap<u64, f64>,
    n: usize,
    i: usize,
    limit: usize,
    weights: GreedyWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..limit.min(n) {
        let mut stratum_sum = 0.0;
        for s in enumerate_stratum(n, k)?.filter(|s| !s.contains(i)) {
            stratum_sum += utilities[&s.with(i).bits()] - utilities[&s.bits()];
        }
        let denominator = match weights {
            GreedyWeights::Shapley => binomial((n - 1) as u64, k as u64)?,
            GreedyWeights::PrintedListing => binomial(n as u64, k as u64)?,
        };
        total += stratum_sum / denominator as f64;
    }
    Ok(total)
}

pub fn k_greedy(oracle: &dyn UtilityOracle, k: usize) -> Result<Valuation> {
    k_greedy_with(oracle, k, KGreedyOptions::default())
}

/// Marginal-contribution estimate restricted to coalitions of at most `k`
/// clients: `φ̂_i = (1/n) Σ_{S ⊆ N\{i}, |S| < k} (U(S∪{i}) - U(S)) / C(n-1, |S|)`.
pub fn k_greedy_with(
    oracle: &dyn UtilityOracle,
    k: usize,
    options: KGreedyOptions,
) -> Result<Valuation> {
    let n = oracle.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} outside 1..={n}")));
    }
    let required: u128 = (0..=k)
        .map(|j| binomial(n as u64, j as u64).map(u128::from))
        .sum::<Result<u128>>()?;
    if required > u128::from(options.max_evaluations) {
        return Err(Error::GuardExceeded {
            method: "kgreedy",
            n,
            limit: n,
            required: format!("{required} coalitions (cap {})", options.max_evaluations),
        });
    }
    let start = Instant::now();
    let memo = Memoized::new(oracle);
    let utilities = evaluate_small_strata(&memo, k)?;
    let values = (0..n)
        .map(|i| Ok(small_strata_sum(&utilities, n, i, k, options.weights)? / n as f64))
        .collect::<Result<Vec<f64>>>()?;
    let mut valuation = Valuation::new("kgreedy", values)?
        .with_detail("K", k)
        .with_detail("weights", options.weights);
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

/// Up to `budget` distinct size-`size` coalitions whose per-client
/// appearance counts differ by at most one.
///
/// Clients are visited in a seeded random priority order. Each block takes
/// the least-used clients first (all of them when fewer than `size` remain at
/// the minimum count), so after every block the counts stay within one of
/// each other; among admissible blocks the first unused one in priority
/// order is taken. Construction stops early only if every admissible block
/// has been used already. Requesting the whole stratum returns it directly.
pub fn balanced_extra<R: Rng + ?Sized>(
    n: usize,
    size: usize,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<Coalition>> {
    let stratum = Stratum::new(n, size)?;
    let cardinality = stratum.cardinality();
    if budget > cardinality {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds the {cardinality} coalitions of size {size}"
        )));
    }
    if budget == 0 || size == 0 {
        return Ok(if budget == 0 { Vec::new() } else { vec![Coalition::empty(n)] });
    }
    if budget == cardinality {
        return Ok(stratum.iter().collect());
    }

    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(rng);
    let mut rank = vec![0usize; n];
    for (pos, &client) in priority.iter().enumerate() {
        rank[client] = pos;
    }

    let mut counts = vec![0u64; n];
    let mut used: BTreeSet<u64> = BTreeSet::new();
    let mut blocks = Vec::with_capacity(budget as usize);
    while (blocks.len() as u64) < budget {
        let low = *counts.iter().min().expect("n >= 1");
        let mut lows: Vec<usize> = (0..n).filter(|&c| counts[c] == low).collect();
        let mut highs: Vec<usize> = (0..n).filter(|&c| counts[c] != low).collect();
        lows.sort_by_key(|&c| rank[c]);
        highs.sort_by_key(|&c| rank[c]);
        let block = if lows.len() >= size {
            first_unused(&lows, size, 0, n, &used)
        } else {
            first_unused(&highs, size - lows.len(), mask_of(&lows), n, &used)
        };
        let Some(mask) = block else { break };
        used.insert(mask);
        for (c, count) in counts.iter_mut().enumerate() {
            *count += mask >> c & 1;
        }
        blocks.push(Coalition::from_bits(n, mask));
    }
    blocks.sort_unstable();
    Ok(blocks)
}

fn mask_of(clients: &[usize]) -> u64 {
    clients.iter().fold(0, |acc, &c| acc | 1 << c)
}

/// First `pick`-subset of `pool` (lexicographic in pool order) that, joined
/// with `base`, is not yet used.
fn first_unused(pool: &[usize], pick: usize, base: u64, n: usize, used: &BTreeSet<u64>) -> Option<u64> {
    debug_assert!(pick <= pool.len() && pool.len() <= n);
    let mut idx: Vec<usize> = (0..pick).collect();
    loop {
        let mask = idx.iter().fold(base, |acc, &p| acc | 1 << pool[p]);
        if !used.contains(&mask) {
            return Some(mask);
        }
        // next combination of `pick` positions out of pool.len()
        let mut j = pick;
        loop {
            if j == 0 {
                return None;
            }
            j -= 1;
            if idx[j] < pool.len() - pick + j {
                break;
            }
        }
        idx[j] += 1;
        for t in j + 1..pick {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Importance-pruned stratified sampling with budget `gamma`.
///
/// Phase one evaluates every coalition of at most `k*` clients; phase two
/// evaluates a balanced set `P` of size-`k* + 1` coalitions using the extra
/// rounds. The estimate is
/// `φ̂_i = (1/n) [ Σ_{|S| < k*} Δ_i(S) / C(n-1,|S|) + Σ_{S ∪ {i} ∈ P} Δ_i(S) / C(n-1,k*) ]`
/// with `Δ_i(S) = U(S ∪ {i}) - U(S)` and `S ⊆ N \ {i}`.
pub fn ipss<R: Rng + ?Sized>(oracle: &dyn UtilityOracle, gamma: u64, rng: &mut R) -> Result<Valuation> {
    let n = oracle.n();
    if gamma < n as u64 + 1 {
        return Err(Error::InvalidArgument(format!(
            "ipss needs gamma >= n + 1 = {}, got {gamma}",
            n + 1
        )));
    }
    let budget = k_star(n, gamma)?;
    let start = Instant::now();
    let memo = Memoized::new(oracle);
    let mut utilities = evaluate_small_strata(&memo, budget.k_star)?;

    let design = if budget.k_star < n {
        let size = budget.k_star + 1;
        let cap = binomial(n as u64, size as u64)?;
        balanced_extra(n, size, budget.extra.min(cap), rng)?
    } else {
        Vec::new()
    };
    let design_utilities: Vec<f64> = design
        .par_iter()
        .map(|&s| memo.evaluate(s))
        .collect::<Result<_>>()?;
    utilities.extend(design.iter().map(Coalition::bits).zip(design_utilities));

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut total = small_strata_sum(&utilities, n, i, budget.k_star, GreedyWeights::Shapley)?;
        if !design.is_empty() {
            let weight = binomial((n - 1) as u64, budget.k_star as u64)? as f64;
            let mut extra_sum = 0.0;
            for block in design.iter().filter(|b| b.contains(i)) {
                extra_sum += utilities[&block.bits()] - utilities[&block.without(i).bits()];
            }
            total += extra_sum / weight;
        }
        values.push(total / n as f64);
    }

    let mut valuation = Valuation::new("ipss", values)?
        .with_detail("gamma", gamma)
        .with_detail("k_star", budget.k_star)
        .with_detail("extra", budget.extra)
        .with_detail("design_size", design.len())
        .with_detail("design", design.iter().map(Coalition::to_string).collect::<Vec<_>>());
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_mc_sv;
    use crate::seed::rng_from_seed;
    use crate::utility::FnOracle;

    fn appearance_counts(n: usize, blocks: &[Coalition]) -> Vec<u64> {
        let mut counts = vec![0; n];
        for b in blocks {
            for c in b.members() {
                counts[c] += 1;
            }
        }
        counts
    }

    #[test]
    fn k_star_examples() {
        assert_eq!(
            k_star(4, 10).unwrap(),
            IpssBudget { n: 4, gamma: 10, k_star: 1, extra: 5 }
        );
        let ten = k_star(10, 32).unwrap();
        assert_eq!((ten.k_star, ten.extra), (1, 21));
        for n in 1..=12 {
            let full = k_star(n, 1 << n).unwrap();
            assert_eq!((full.k_star, full.extra), (n, 0));
        }
        assert_eq!(k_star(5, 1).unwrap().k_star, 0);
        assert!(k_star(5, 0).is_err());
        let wide = k_star(64, u64::MAX).unwrap();
        assert_eq!(wide.k_star, 63);
    }

    #[test]
    fn k_star_invariants() {
        for n in 1..=12usize {
            for gamma in 1..=(1u64 << n) + 3 {
                let b = k_star(n, gamma).unwrap();
                if b.k_star < n {
                    assert!(b.extra < binomial(n as u64, b.k_star as u64 + 1).unwrap());
                }
            }
        }
    }

    #[test]
    fn balanced_examples() {
        for seed in 0..50 {
            let blocks = balanced_extra(4, 2, 5, &mut rng_from_seed(seed)).unwrap();
            assert_eq!(blocks.len(), 5);
            assert!(blocks.iter().all(|b| b.size() == 2));
            assert_eq!(blocks.iter().collect::<BTreeSet<_>>().len(), 5);
            let counts = appearance_counts(4, &blocks);
            assert!(counts.iter().all(|&c| c == 2 || c == 3), "{counts:?}");

            let matching = balanced_extra(6, 2, 3, &mut rng_from_seed(seed)).unwrap();
            assert_eq!(appearance_counts(6, &matching), vec![1; 6]);
        }
        let whole = balanced_extra(5, 3, 10, &mut rng_from_seed(1)).unwrap();
        assert_eq!(whole, enumerate_stratum(5, 3).unwrap().collect::<Vec<_>>());
        assert_eq!(appearance_counts(5, &whole), vec![6; 5]);
        assert!(balanced_extra(4, 2, 7, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn balanced_counts_differ_by_at_most_one() {
        for n in 2..=9usize {
            for size in 1..n {
                let cap = binomial(n as u64, size as u64).unwrap();
                for budget in 0..=cap.min(40) {
                    let blocks = balanced_extra(n, size, budget, &mut rng_from_seed(budget)).unwrap();
                    assert!(blocks.len() as u64 <= budget);
                    let counts = appearance_counts(n, &blocks);
                    let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
                    assert!(spread <= 1, "n={n} size={size} budget={budget}: {counts:?}");
                    if (budget * size as u64).is_multiple_of(n as u64) && blocks.len() as u64 == budget {
                        assert_eq!(spread, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_single_stratum() {
        let u = |s: Coalition| 0.1 + 0.3 * s.size() as f64 + 0.01 * s.bits() as f64;
        let oracle = FnOracle::new(5, u);
        let v = k_greedy(&oracle, 1).unwrap();
        for i in 0..5 {
            let expected = (u(Coalition::empty(5).with(i)) - u(Coalition::empty(5))) / 5.0;
            assert!((v.values[i] - expected).abs() < 1e-15);
        }
        assert_eq!(v.evaluations, 6);
        assert!(k_greedy(&oracle, 0).is_err());
        assert!(k_greedy(&oracle, 6).is_err());
    }

    #[test]
    fn greedy_full_depth_is_exact() {
        let oracle = FnOracle::new(6, |s| (s.bits() as f64 * 0.37).sin());
        let exact = exact_mc_sv(&oracle).unwrap();
        let v = k_greedy(&oracle, 6).unwrap();
        for (a, e) in v.values.iter().zip(&exact.values) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn printed_weights_scale_strata() {
        let oracle = FnOracle::new(4, |s| s.size() as f64);
        let options = KGreedyOptions {
            weights: GreedyWeights::PrintedListing,
            ..Default::default()
        };
        // every marginal is 1: Σ_{s<2} C(3,s)/C(4,s) / 4 = (1 + 3/4) / 4
        let v = k_greedy_with(&oracle, 2, options).unwrap();
        assert!((v.values[0] - 1.75 / 4.0).abs() < 1e-15);
        let guarded = KGreedyOptions {
            max_evaluations: 5,
            ..Default::default()
        };
        assert!(k_greedy_with(&oracle, 2, guarded).is_err());
    }

    #[test]
    fn ipss_full_budget_is_exact() {
        let oracle = FnOracle::new(5, |s| (s.bits() as f64 * 0.91).cos() + s.size() as f64);
        let exact = exact_mc_sv(&oracle).unwrap();
        let v = ipss(&oracle, 32, &mut rng_from_seed(4)).unwrap();
        for (a, e) in v.values.iter().zip(&exact.values) {
            assert!((a - e).abs() < 1e-10);
        }
        assert_eq!(v.details["k_star"], 5);
    }

    #[test]
    fn ipss_budget_accounting() {
        let oracle = FnOracle::new(4, |s| s.bits() as f64 * 0.01);
        let v = ipss(&oracle, 10, &mut rng_from_seed(2)).unwrap();
        assert_eq!(v.evaluations, 10);
        assert_eq!(v.details["k_star"], 1);
        assert_eq!(v.details["extra"], 5);
        assert_eq!(v.details["design_size"], 5);
        assert!(ipss(&oracle, 4, &mut rng_from_seed(2)).is_err());
    }

    #[test]
    fn ipss_null_client_is_zero() {
        let oracle = FnOracle::new(6, |s| {
            let s = s.without(3);
            (s.bits() as f64).sqrt()
        });
        for gamma in [7, 10, 22, 40, 64] {
            let v = ipss(&oracle, gamma, &mut rng_from_seed(gamma)).unwrap();
            assert_eq!(v.values[3], 0.0);
        }
    }
}

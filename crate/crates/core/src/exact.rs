//! Exact Shapley values under the three equivalent definitions: marginal
//! contributions, complementary contributions, and the average over all
//! client orderings. These are the reference every approximation is
//! measured against.

use std::time::Instant;

use rayon::prelude::*;

use crate::coalition::{binomial, enumerate_stratum, for_each_permutation, Coalition};
use crate::error::{Error, Result};
use crate::utility::{Memoized, UtilityOracle};
use crate::valuation::Valuation;

/// Cost guards for the exhaustive solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactLimits {
    /// Largest n for the 2^n subset solvers.
    pub max_subset_n: usize,
    /// Largest n for the n! permutation solver.
    pub max_permutation_n: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        Self {
            max_subset_n: 20,
            max_permutation_n: 10,
        }
    }
}

impl ExactLimits {
    /// Guards that admit any n the dense utility vector can hold.
    pub fn unguarded() -> Self {
        Self {
            max_subset_n: 30,
            max_permutation_n: 12,
        }
    }
}

/// Utilities of all `2^n` coalitions indexed by bitmask, evaluated through
/// `memo` in parallel. Order of completion does not affect the result.
pub(crate) fn dense_utilities<O: UtilityOracle>(memo: &Memoized<O>) -> Result<Vec<f64>> {
    let n = memo.n();
    (0..1u64 << n)
        .into_par_iter()
        .map(|bits| memo.evaluate(Coalition::from_bits(n, bits)))
        .collect()
}

fn check_guard(method: &'static str, n: usize, limit: usize, required: String) -> Result<()> {
    if n > limit {
        return Err(Error::GuardExceeded {
            method,
            n,
            limit,
            required,
        });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Pairing {
    Marginal,
    Complementary,
}

fn subset_solver(
    oracle: &dyn UtilityOracle,
    limits: ExactLimits,
    pairing: Pairing,
) -> Result<Valuation> {
    let n = oracle.n();
    let method = match pairing {
        Pairing::Marginal => "exact_mc",
        Pairing::Complementary => "exact_cc",
    };
    check_guard(method, n, limits.max_subset_n, format!("2^{n}"))?;
    let start = Instant::now();
    let memo = Memoized::new(oracle);
    let utility = dense_utilities(&memo)?;
    let grand = Coalition::grand(n);

    let mut values = vec![0.0; n];
    for (i, value) in values.iter_mut().enumerate() {
        let mut total = 0.0;
        for k in 0..n {
            let mut stratum_sum = 0.0;
            for s in enumerate_stratum(n, k)?.filter(|s| !s.contains(i)) {
                let with_i = s.with(i);
                let paired = match pairing {
                    Pairing::Marginal => s,
                    Pairing::Complementary => Coalition::from_bits(n, grand.bits() & !with_i.bits()),
                };
                stratum_sum += utility[with_i.bits() as usize] - utility[paired.bits() as usize];
            }
            total += stratum_sum / binomial((n - 1) as u64, k as u64)? as f64;
        }
        *value = total / n as f64;
    }

    let mut valuation = Valuation::new(method, values)?;
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

/// Shapley value as the weighted average of marginal contributions
/// `U(S ∪ {i}) - U(S)` over every `S ⊆ N \ {i}`.
pub fn exact_mc_sv(oracle: &dyn UtilityOracle) -> Result<Valuation> {
    exact_mc_sv_with(oracle, ExactLimits::default())
}

pub fn exact_mc_sv_with(oracle: &dyn UtilityOracle, limits: ExactLimits) -> Result<Valuation> {
    subset_solver(oracle, limits, Pairing::Marginal)
}

/// Shapley value from complementary contributions
/// `U(S ∪ {i}) - U(N \ (S ∪ {i}))`.
pub fn exact_cc_sv(oracle: &dyn UtilityOracle) -> Result<Valuation> {
    exact_cc_sv_with(oracle, ExactLimits::default())
}

pub fn exact_cc_sv_with(oracle: &dyn UtilityOracle, limits: ExactLimits) -> Result<Valuation> {
    subset_solver(oracle, limits, Pairing::Complementary)
}

/// Mean marginal contribution over all `n!` client orderings.
pub fn exact_perm_sv(oracle: &dyn UtilityOracle) -> Result<Valuation> {
    exact_perm_sv_with(oracle, ExactLimits::default())
}

pub fn exact_perm_sv_with(oracle: &dyn UtilityOracle, limits: ExactLimits) -> Result<Valuation> {
    let n = oracle.n();
    check_guard("exact_perm", n, limits.max_permutation_n, format!("{n}! orderings over 2^{n}"))?;
    let start = Instant::now();
    let memo = Memoized::new(oracle);
    let utility = dense_utilities(&memo)?;

    let mut sums = vec![0.0; n];
    let mut orderings = 0u64;
    for_each_permutation(n, |order| {
        let mut prefix = 0u64;
        for &client in order {
            let before = utility[prefix as usize];
            prefix |= 1 << client;
            sums[client] += utility[prefix as usize] - before;
        }
        orderings += 1;
    });
    let values = sums.into_iter().map(|s| s / orderings as f64).collect();

    let mut valuation = Valuation::new("exact_perm", values)?;
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::{table_oracle, FnOracle, UtilityTable};

    fn example_table() -> UtilityTable {
        UtilityTable::from_dense(3, &[0.10, 0.50, 0.70, 0.80, 0.60, 0.90, 0.90, 0.96]).unwrap()
    }

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn three_client_example() {
        let oracle = table_oracle(example_table()).unwrap();
        let mc = exact_mc_sv(&oracle).unwrap();
        assert_close(&mc.values, &[0.22, 0.32, 0.32], 1e-12);
        assert_eq!(mc.evaluations, 8);
        let cc = exact_cc_sv(&oracle).unwrap();
        assert_close(&cc.values, &mc.values, 1e-12);
        let perm = exact_perm_sv(&oracle).unwrap();
        assert_close(&perm.values, &mc.values, 1e-12);
        assert!((mc.sum() - 0.86).abs() < 1e-10);
    }

    #[test]
    fn constant_game_is_zero() {
        let oracle = FnOracle::new(5, |_| 0.7);
        for v in [
            exact_mc_sv(&oracle).unwrap(),
            exact_cc_sv(&oracle).unwrap(),
            exact_perm_sv(&oracle).unwrap(),
        ] {
            assert!(v.values.iter().all(|&x| x == 0.0), "{v:?}");
        }
    }

    #[test]
    fn single_client() {
        let oracle = FnOracle::new(1, |s| if s.is_empty() { 0.25 } else { 1.0 });
        assert_eq!(exact_mc_sv(&oracle).unwrap().values, vec![0.75]);
        assert_eq!(exact_perm_sv(&oracle).unwrap().values, vec![0.75]);
    }

    #[test]
    fn two_client_orderings() {
        let u = [0.1, 0.4, 0.3, 0.9];
        let oracle = FnOracle::new(2, move |s| u[s.bits() as usize]);
        let expected = ((u[1] - u[0]) + (u[3] - u[2])) / 2.0;
        let perm = exact_perm_sv(&oracle).unwrap();
        assert!((perm.values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn guards_refuse_large_n() {
        let oracle = FnOracle::new(21, |_| 0.0);
        let err = exact_mc_sv(&oracle).unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { required, .. } if required == "2^21"));
        let oracle = FnOracle::new(11, |_| 0.0);
        assert!(exact_perm_sv(&oracle).is_err());
        assert!(exact_mc_sv(&oracle).is_ok());
    }

    #[test]
    fn missing_utility_propagates() {
        let mut table = UtilityTable::new(2).unwrap();
        table.insert(Coalition::empty(2), 0.0).unwrap();
        let oracle = table_oracle(table).unwrap();
        assert!(matches!(exact_mc_sv(&oracle), Err(Error::MissingCoalition(_))));
    }

    #[test]
    fn null_player_gets_exact_zero() {
        // client 2 (index 1) never changes utility
        let oracle = FnOracle::new(4, |s| {
            let s = s.without(1);
            (s.bits() as f64).sqrt() * 0.1 + s.size() as f64 * 0.05
        });
        for v in [exact_mc_sv(&oracle).unwrap(), exact_perm_sv(&oracle).unwrap()] {
            assert_eq!(v.values[1], 0.0, "{}", v.method);
        }
    }
}

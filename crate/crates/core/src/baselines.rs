//! Comparison baselines: truncated Monte Carlo over client orderings and the
//! complementary-contribution stratified estimator under its own name.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::coalition::{for_each_permutation, random_permutation, Coalition};
use crate::error::{Error, Result};
use crate::stratified::{default_plan, stratified_estimate, Scheme};
use crate::utility::{Memoized, UtilityOracle};
use crate::valuation::Valuation;

/// Truncation tolerance used when none is configured: `1e-3 · |U(N)|`.
pub fn default_trunc_tol(grand_utility: f64) -> f64 {
    1e-3 * grand_utility.abs()
}

/// Marginal contributions along one ordering. Once the prefix utility is
/// within `trunc_tol` of `U(N)` the remaining clients get zero.
fn walk<O: UtilityOracle>(
    memo: &Memoized<O>,
    order: &[usize],
    grand_utility: f64,
    trunc_tol: f64,
) -> Result<Vec<f64>> {
    let n = order.len();
    let mut contributions = vec![0.0; n];
    let mut prefix = Coalition::empty(n);
    let mut before = memo.evaluate(prefix)?;
    for &client in order {
        if (grand_utility - before).abs() < trunc_tol {
            break;
        }
        prefix = prefix.with(client);
        let after = memo.evaluate(prefix)?;
        contributions[client] = after - before;
        before = after;
    }
    Ok(contributions)
}

fn average_walks<O: UtilityOracle>(
    memo: &Memoized<O>,
    orders: &[Vec<usize>],
    trunc_tol: f64,
) -> Result<Vec<f64>> {
    let n = memo.n();
    memo.evaluate(Coalition::empty(n))?;
    let grand_utility = memo.evaluate(Coalition::grand(n))?;
    let walks: Vec<Vec<f64>> = orders
        .par_iter()
        .map(|order| walk(memo, order, grand_utility, trunc_tol))
        .collect::<Result<_>>()?;
    let mut sums = vec![0.0; n];
    for contributions in &walks {
        for (s, c) in sums.iter_mut().zip(contributions) {
            *s += c;
        }
    }
    Ok(sums.into_iter().map(|s| s / orders.len() as f64).collect())
}

fn check_tmc_args(rounds: u64, trunc_tol: f64) -> Result<()> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("tmc needs at least one round".into()));
    }
    if !trunc_tol.is_finite() || trunc_tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "truncation tolerance must be finite and >= 0, got {trunc_tol}"
        )));
    }
    Ok(())
}

/// Extended-TMC: the mean marginal contribution over `rounds` uniformly
/// drawn orderings, truncating each walk once the prefix is within
/// `trunc_tol` of the grand-coalition utility. All orderings are drawn before
/// any walk, so the tolerance never changes which orderings are used.
pub fn extended_tmc<R: Rng + ?Sized>(
    oracle: &dyn UtilityOracle,
    rounds: u64,
    trunc_tol: f64,
    rng: &mut R,
) -> Result<Valuation> {
    check_tmc_args(rounds, trunc_tol)?;
    let n = oracle.n();
    let start = Instant::now();
    let orders: Vec<Vec<usize>> = (0..rounds).map(|_| random_permutation(n, rng)).collect();
    let memo = Memoized::new(oracle);
    let values = average_walks(&memo, &orders, trunc_tol)?;
    let mut valuation = Valuation::new("tmc", values)?
        .with_detail("rounds", rounds)
        .with_detail("trunc_tol", trunc_tol);
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

/// Extended-TMC walked over every one of the `n!` orderings once.
pub fn extended_tmc_exhaustive(oracle: &dyn UtilityOracle, trunc_tol: f64) -> Result<Valuation> {
    check_tmc_args(1, trunc_tol)?;
    let n = oracle.n();
    if n > 10 {
        return Err(Error::GuardExceeded {
            method: "tmc",
            n,
            limit: 10,
            required: format!("{n}! orderings"),
        });
    }
    let start = Instant::now();
    let mut orders = Vec::new();
    for_each_permutation(n, |order| orders.push(order.to_vec()));
    let memo = Memoized::new(oracle);
    let values = average_walks(&memo, &orders, trunc_tol)?;
    let mut valuation = Valuation::new("tmc", values)?
        .with_detail("rounds", orders.len())
        .with_detail("trunc_tol", trunc_tol)
        .with_detail("exhaustive", true);
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

/// Complementary-contribution stratified sampling with the default plan
/// for budget `gamma`.
pub fn cc_shapley<R: Rng + ?Sized>(
    oracle: &dyn UtilityOracle,
    gamma: u64,
    rng: &mut R,
) -> Result<Valuation> {
    let plan = default_plan(oracle.n(), gamma)?;
    let mut valuation = stratified_estimate(oracle, &plan, Scheme::Cc, rng)?;
    valuation.method = "ccshapley".into();
    Ok(valuation)
}

//! Stratified sampling over coalition sizes.
//!
//! Coalitions of equal size form a stratum. A [`SamplingPlan`] fixes how many
//! coalitions `m_k` are drawn (without replacement) from each stratum
//! `k = 1..=n`. Every sampled `S` containing client `i` is paired with a
//! second coalition (`S \ {i}` under [`Scheme::Mc`], `N \ S` under
//! [`Scheme::Cc`]); when that partner has a utility, `U(S) - U(partner)`
//! enters client `i`'s stratum average. The estimate is the mean of the
//! stratum averages over all `n` strata, a stratum without any usable pair
//! counting as zero.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{binomial, sample_stratum, Coalition};
use crate::error::{Error, Result};
use crate::exact::{exact_cc_sv, exact_mc_sv};
use crate::seed::derive_rng;
use crate::utility::{Memoized, UtilityOracle};
use crate::valuation::Valuation;

/// Which coalition a sampled `S ∋ i` is paired with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Marginal contribution: partner `S \ {i}`.
    Mc,
    /// Complementary contribution: partner `N \ S`.
    Cc,
}

impl Scheme {
    pub fn partner(self, coalition: Coalition, client: usize) -> Coalition {
        match self {
            Scheme::Mc => coalition.without(client),
            Scheme::Cc => coalition.complement(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mc => "mc",
            Scheme::Cc => "cc",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" => Ok(Scheme::Mc),
            "cc" => Ok(Scheme::Cc),
            other => Err(Error::Config(format!("unknown scheme `{other}` (expected mc or cc)"))),
        }
    }
}

/// Per-stratum sampling rounds `m_1..=m_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    n: usize,
    rounds: Vec<u64>,
}

impl SamplingPlan {
    /// `rounds[k - 1]` is the number of size-`k` coalitions to draw.
    pub fn new(n: usize, rounds: Vec<u64>) -> Result<Self> {
        if rounds.len() != n {
            return Err(Error::InvalidArgument(format!(
                "plan for n = {n} needs {n} stratum counts, got {}",
                rounds.len()
            )));
        }
        for (idx, &m) in rounds.iter().enumerate() {
            let cap = binomial(n as u64, idx as u64 + 1)?;
            if m > cap {
                return Err(Error::InvalidArgument(format!(
                    "stratum {} has {cap} coalitions, plan asks for {m}",
                    idx + 1
                )));
            }
        }
        if rounds.iter().all(|&m| m == 0) {
            return Err(Error::InvalidArgument("sampling plan has zero total rounds".into()));
        }
        Ok(Self { n, rounds })
    }

    /// Every non-empty coalition.
    pub fn full(n: usize) -> Result<Self> {
        let rounds = (1..=n as u64)
            .map(|k| binomial(n as u64, k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, rounds)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rounds(&self) -> &[u64] {
        &self.rounds
    }

    /// Rounds for stratum `k` (1-based).
    pub fn stratum(&self, k: usize) -> u64 {
        self.rounds[k - 1]
    }

    pub fn gamma(&self) -> u64 {
        self.rounds.iter().sum()
    }

    pub fn is_full(&self) -> bool {
        self.rounds
            .iter()
            .enumerate()
            .all(|(idx, &m)| Some(m) == binomial(self.n as u64, idx as u64 + 1).ok())
    }
}

/// Splits `gamma` as evenly as possible over strata `1..=n`, capping each
/// stratum at its size. Leftover rounds that do not split evenly go one each
/// to the smallest uncapped strata. Budgets beyond `2^n - 1` yield the full
/// plan.
pub fn default_plan(n: usize, gamma: u64) -> Result<SamplingPlan> {
    if gamma == 0 {
        return Err(Error::InvalidArgument("gamma must be at least 1".into()));
    }
    let caps = (1..=n as u64)
        .map(|k| binomial(n as u64, k))
        .collect::<Result<Vec<_>>>()?;
    let total: u128 = caps.iter().map(|&c| u128::from(c)).sum();
    let mut remaining = u128::from(gamma).min(total) as u64;
    let mut rounds = vec![0u64; n];
    while remaining > 0 {
        let open: Vec<usize> = (0..n).filter(|&k| rounds[k] < caps[k]).collect();
        let share = remaining / open.len() as u64;
        if share == 0 {
            for &k in open.iter().take(remaining as usize) {
                rounds[k] += 1;
            }
            break;
        }
        for &k in &open {
            let add = share.min(caps[k] - rounds[k]);
            rounds[k] += add;
            remaining -= add;
        }
    }
    SamplingPlan::new(n, rounds)
}

/// Running `(sum, pairs)` for one client in one stratum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StratumTally {
    pub sum: f64,
    pub pairs: u64,
}

impl StratumTally {
    pub fn new(sum: f64, pairs: u64) -> Self {
        Self { sum, pairs }
    }
}

/// Mean of the stratum averages over all `n` strata; a stratum with no pair
/// contributes zero but still counts in the divisor.
pub fn combine_strata(n: usize, tallies: &[StratumTally]) -> f64 {
    let total: f64 = tallies
        .iter()
        .filter(|t| t.pairs > 0)
        .map(|t| t.sum / t.pairs as f64)
        .sum();
    total / n as f64
}

/// Coalitions drawn for each stratum, ascending within a stratum.
pub(crate) fn draw_plan<R: Rng + ?Sized>(plan: &SamplingPlan, rng: &mut R) -> Result<Vec<Vec<Coalition>>> {
    (1..=plan.n)
        .map(|k| sample_stratum(plan.n, k, plan.stratum(k), rng))
        .collect()
}

/// One run of the stratified estimator.
pub fn stratified_estimate<R: Rng + ?Sized>(
    oracle: &dyn UtilityOracle,
    plan: &SamplingPlan,
    scheme: Scheme,
    rng: &mut R,
) -> Result<Valuation> {
    let n = oracle.n();
    if plan.n != n {
        return Err(Error::InvalidArgument(format!(
            "plan is for n = {}, oracle has n = {n}",
            plan.n
        )));
    }
    let start = Instant::now();
    let memo = Memoized::new(oracle);
    let sampled = draw_plan(plan, rng)?;

    let mut to_evaluate = vec![Coalition::empty(n)];
    to_evaluate.extend(sampled.iter().flatten().copied());
    let utilities: Vec<f64> = to_evaluate
        .par_iter()
        .map(|&s| memo.evaluate(s))
        .collect::<Result<_>>()?;
    let known: HashMap<u64, f64> = to_evaluate
        .iter()
        .map(Coalition::bits)
        .zip(utilities)
        .collect();

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let tallies: Vec<StratumTally> = sampled
            .iter()
            .map(|stratum| {
                let mut tally = StratumTally::default();
                for s in stratum.iter().filter(|s| s.contains(i)) {
                    let partner = scheme.partner(*s, i);
                    if let Some(u_partner) = known.get(&partner.bits()) {
                        tally.sum += known[&s.bits()] - u_partner;
                        tally.pairs += 1;
                    }
                }
                tally
            })
            .collect();
        values.push(combine_strata(n, &tallies));
    }

    let mut valuation = Valuation::new("sample", values)?
        .with_detail("scheme", scheme)
        .with_detail("plan", plan.rounds())
        .with_detail("gamma", plan.gamma());
    valuation.evaluations = memo.stats().evaluations;
    valuation.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(valuation)
}

/// Welford accumulator over per-client vectors.
#[derive(Clone, Debug)]
pub(crate) struct RunningMoments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub(crate) fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let delta = x - *mean;
            *mean += delta / k;
            *m2 += delta * (x - *mean);
        }
    }

    pub(crate) fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance; `None` with fewer than two observations.
    pub(crate) fn variance(&self) -> Option<Vec<f64>> {
        (self.count >= 2).then(|| {
            self.m2
                .iter()
                .map(|m2| m2 / (self.count - 1) as f64)
                .collect()
        })
    }
}

/// Outcome of repeating the estimator against the exact value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub scheme: Scheme,
    pub repeats: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub exact: Vec<f64>,
    /// `(mean - exact) / std_error`; zero when both the deviation and the
    /// standard error vanish.
    pub z: Vec<f64>,
}

impl UnbiasednessReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |acc, z| acc.max(z.abs()))
    }
}

/// Values of `repeats` independent runs, repeat `r` seeded from
/// `(seed, label, r)`. Results are in repeat order.
pub(crate) fn repeated_runs(
    oracle: &dyn UtilityOracle,
    plan: &SamplingPlan,
    scheme: Scheme,
    repeats: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Vec<f64>>> {
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_rng(seed, label, r as u64);
            stratified_estimate(oracle, plan, scheme, &mut rng).map(|v| v.values)
        })
        .collect()
}

/// Repeats the estimator and compares the mean with the exact Shapley value
/// of the matching scheme.
pub fn unbiasedness_check(
    oracle: &dyn UtilityOracle,
    plan: &SamplingPlan,
    scheme: Scheme,
    repeats: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let exact = match scheme {
        Scheme::Mc => exact_mc_sv(oracle)?,
        Scheme::Cc => exact_cc_sv(oracle)?,
    }
    .values;
    let shared = Memoized::new(oracle);
    let runs = repeated_runs(&shared, plan, scheme, repeats, seed, "unbiasedness")?;
    let mut moments = RunningMoments::new(oracle.n());
    for run in &runs {
        moments.push(run);
    }
    let mean = moments.mean().to_vec();
    let std_error: Vec<f64> = match moments.variance() {
        Some(var) => var.iter().map(|v| (v / repeats as f64).sqrt()).collect(),
        None => vec![0.0; mean.len()],
    };
    let z = mean
        .iter()
        .zip(&exact)
        .zip(&std_error)
        .map(|((m, e), se)| {
            let dev = m - e;
            if *se > 0.0 {
                dev / se
            } else if dev.abs() <= 1e-12 * e.abs().max(1.0) {
                0.0
            } else {
                dev.signum() * f64::INFINITY
            }
        })
        .collect();
    Ok(UnbiasednessReport {
        scheme,
        repeats,
        mean,
        std_error,
        exact,
        z,
    })
}

/// Empirical per-client variance of both schemes under one plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub repeats: usize,
    /// False when `repeats < 2`; variances are then reported as zero.
    pub defined: bool,
    pub var_mc: Vec<f64>,
    pub var_cc: Vec<f64>,
    /// Share of clients with `var_mc <= var_cc`; absent when undefined.
    pub fraction_mc_le_cc: Option<f64>,
}

/// Runs both schemes `repeats` times on the same oracle and plan. Repeat `r`
/// of each scheme uses the same random stream.
pub fn variance_comparison(
    oracle: &dyn UtilityOracle,
    plan: &SamplingPlan,
    repeats: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let n = oracle.n();
    let shared = Memoized::new(oracle);
    let variance_of = |scheme| -> Result<Option<Vec<f64>>> {
        let runs = repeated_runs(&shared, plan, scheme, repeats, seed, "variance")?;
        let mut moments = RunningMoments::new(n);
        for run in &runs {
            moments.push(run);
        }
        Ok(moments.variance())
    };
    let (var_mc, var_cc) = match (variance_of(Scheme::Mc)?, variance_of(Scheme::Cc)?) {
        (Some(mc), Some(cc)) => (mc, cc),
        _ => {
            return Ok(VarianceReport {
                repeats,
                defined: false,
                var_mc: vec![0.0; n],
                var_cc: vec![0.0; n],
                fraction_mc_le_cc: None,
            })
        }
    };
    let wins = var_mc.iter().zip(&var_cc).filter(|(mc, cc)| mc <= cc).count();
    Ok(VarianceReport {
        repeats,
        defined: true,
        fraction_mc_le_cc: Some(wins as f64 / n as f64),
        var_mc,
        var_cc,
    })
}

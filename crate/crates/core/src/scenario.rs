//! Synthetic regression federations for the five partition scenarios.
//!
//! Every client draws features `x ~ N(0, I_d)` and targets
//! `y = x · w* + ε`, `ε ~ N(0, σ²)`, with `w* ~ N(0, I_d)` shared by the
//! federation. The scenarios differ as follows:
//!
//! * `same_size_same_dist`: every client holds `t` i.i.d. samples.
//! * `same_size_diff_dist`: each client's features are shifted by its own
//!   mean vector `μ_i ~ N(0, I_d)`.
//! * `diff_size_same_dist`: sizes in ratio `1:2:…:n`, total `n·t`, rounded
//!   down with the remainder given to the largest client.
//! * `same_size_noisy_label`: `round(noise_level · t)` targets per client are
//!   replaced by draws from the target marginal `N(0, ‖w*‖² + σ²)`.
//! * `same_size_noisy_feature`: `noise_level · N(0, 1)` is added to every
//!   feature after the targets are computed.
//!
//! The shared test set has `10·d·n` unshifted rows with noiseless targets
//! `x · w*`, so the test MSE of a model is its excess error. Corruption draws
//! come from their own streams, which makes a noisy scenario with
//! `noise_level = 0` identical to `same_size_same_dist` under the same seed.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coalition::MAX_CLIENTS;
use crate::error::{Error, Result};
use crate::seed::derive_rng;
use crate::utility::{ClientData, RegressionFederation};

pub const MAX_NOISE_LEVEL: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SameSizeSameDist,
    SameSizeDiffDist,
    DiffSizeSameDist,
    SameSizeNoisyLabel,
    SameSizeNoisyFeature,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::SameSizeSameDist,
        Scenario::SameSizeDiffDist,
        Scenario::DiffSizeSameDist,
        Scenario::SameSizeNoisyLabel,
        Scenario::SameSizeNoisyFeature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SameSizeSameDist => "same_size_same_dist",
            Scenario::SameSizeDiffDist => "same_size_diff_dist",
            Scenario::DiffSizeSameDist => "diff_size_same_dist",
            Scenario::SameSizeNoisyLabel => "same_size_noisy_label",
            Scenario::SameSizeNoisyFeature => "same_size_noisy_feature",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|sc| sc.name()).collect();
                Error::Config(format!("unknown scenario '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub sigma: f64,
    /// Corruption strength for the two noisy scenarios; ignored otherwise.
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_CLIENTS {
            return Err(Error::Config(format!("n = {} outside 1..={MAX_CLIENTS}", self.n)));
        }
        if self.t == 0 {
            return Err(Error::Config("t must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma {} must be finite and >= 0", self.sigma)));
        }
        if !(0.0..=MAX_NOISE_LEVEL).contains(&self.noise_level) {
            return Err(Error::Config(format!(
                "noise_level {} outside [0, {MAX_NOISE_LEVEL}]",
                self.noise_level
            )));
        }
        Ok(())
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        match self.scenario {
            Scenario::DiffSizeSameDist => proportional_sizes(self.n, self.t),
            _ => vec![self.t; self.n],
        }
    }
}

/// Sizes in ratio `1:2:…:n` summing to `n·t`.
pub fn proportional_sizes(n: usize, t: usize) -> Vec<usize> {
    let total = n * t;
    let weight = n * (n + 1) / 2;
    let mut sizes: Vec<usize> = (1..=n).map(|i| total * i / weight).collect();
    let assigned: usize = sizes.iter().sum();
    sizes[n - 1] += total - assigned;
    sizes
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // filled row by row so a prefix of rows does not depend on `rows`
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

pub fn generate(config: &ScenarioConfig) -> Result<RegressionFederation> {
    config.validate()?;
    let ScenarioConfig { n, t, d, sigma, seed, .. } = *config;
    let mut coefficient_rng = derive_rng(seed, "scenario/coefficients", 0);
    let w_star = DVector::from_iterator(
        d,
        (0..d).map(|_| coefficient_rng.sample::<f64, _>(StandardNormal)),
    );
    let marginal_sd = (w_star.norm_squared() + sigma * sigma).sqrt();

    let mut clients = Vec::with_capacity(n);
    for (i, size) in config.client_sizes().into_iter().enumerate() {
        let mut rng = derive_rng(seed, "scenario/client", i as u64);
        let mut features = normal_matrix(size, d, &mut rng);
        if config.scenario == Scenario::SameSizeDiffDist {
            let mut shift_rng = derive_rng(seed, "scenario/shift", i as u64);
            let shift: Vec<f64> = (0..d).map(|_| shift_rng.sample(StandardNormal)).collect();
            for (c, mu) in shift.iter().enumerate() {
                features.column_mut(c).add_scalar_mut(*mu);
            }
        }
        let noise = DVector::from_iterator(size, (0..size).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let mut targets = &features * &w_star + noise * sigma;

        let mut corruption = derive_rng(seed, "scenario/corruption", i as u64);
        match config.scenario {
            Scenario::SameSizeNoisyLabel => {
                let flipped = (config.noise_level * size as f64).round() as usize;
                for row in index::sample(&mut corruption, size, flipped.min(size)) {
                    targets[row] = marginal_sd * corruption.sample::<f64, _>(StandardNormal);
                }
            }
            Scenario::SameSizeNoisyFeature if config.noise_level > 0.0 => {
                let jitter = normal_matrix(size, d, &mut corruption);
                features += jitter * config.noise_level;
            }
            _ => {}
        }
        clients.push(ClientData::new(features, targets)?);
    }

    let mut test_rng = derive_rng(seed, "scenario/test", 0);
    let test_features = normal_matrix(10 * d * n, d, &mut test_rng);
    let test_targets = &test_features * &w_star;
    RegressionFederation::new(t, sigma, w_star, clients, test_features, test_targets)
}

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodSpec};
use super::metrics::{fairness_proxies, relative_error, FairnessProxies};
use crate::baselines::{cc_shapley, default_trunc_tol, extended_tmc};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::exact::{exact_cc_sv, exact_mc_sv, exact_perm_sv};
use crate::pruned::{ipss, k_greedy_with, KGreedyOptions};
use crate::scenario::generate;
use crate::seed::{derive_seed, rng_from_seed};
use crate::stratified::{default_plan, stratified_estimate, SamplingPlan};
use crate::utility::{load_table, regression_oracle, table_oracle, UtilityOracle};
use crate::valuation::Valuation;

/// The utility source of an experiment plus its fairness designations
/// (0-based).
pub struct Source {
    pub oracle: Arc<dyn UtilityOracle>,
    pub null_clients: Vec<usize>,
    pub duplicate_pairs: Vec<(usize, usize)>,
}

/// Builds the oracle. Scenario sources have their null and duplicate clients
/// applied to the data; table sources are taken as given.
pub fn load_source(config: &ExperimentConfig) -> Result<Source> {
    config.validate()?;
    let null_clients: Vec<usize> = config.null_clients.iter().map(|j| j.wrapping_sub(1)).collect();
    let duplicate_pairs: Vec<(usize, usize)> = config
        .duplicate_pairs
        .iter()
        .map(|&[i, j]| (i.wrapping_sub(1), j.wrapping_sub(1)))
        .collect();
    let oracle: Arc<dyn UtilityOracle> = match (&config.scenario, &config.table) {
        (Some(scenario), _) => {
            config.validate_for(scenario.n)?;
            let mut fed = generate(scenario)?;
            for &j in &null_clients {
                fed = fed.with_null_client(j)?;
            }
            for &(i, j) in &duplicate_pairs {
                fed = fed.with_duplicate(i, j)?;
            }
            Arc::new(regression_oracle(fed))
        }
        (None, Some(path)) => {
            let table = load_table(path).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read table {}: {io}", path.display())),
                other => other,
            })?;
            let oracle = table_oracle(table)?;
            config.validate_for(oracle.n())?;
            Arc::new(oracle)
        }
        (None, None) => unreachable!("validated above"),
    };
    Ok(Source {
        oracle,
        null_clients,
        duplicate_pairs,
    })
}

/// Runs one method once with the given stream seed.
pub fn run_method(spec: &MethodSpec, oracle: &dyn UtilityOracle, stream_seed: u64) -> Result<Valuation> {
    let mut rng = rng_from_seed(stream_seed);
    let mut valuation = match spec {
        MethodSpec::ExactMc => exact_mc_sv(oracle)?,
        MethodSpec::ExactCc => exact_cc_sv(oracle)?,
        MethodSpec::ExactPerm => exact_perm_sv(oracle)?,
        MethodSpec::Sample { scheme, gamma, m } => {
            let plan = match (gamma, m) {
                (_, Some(m)) => SamplingPlan::new(oracle.n(), m.clone())?,
                (Some(g), None) => default_plan(oracle.n(), *g)?,
                (None, None) => return Err(Error::Config("sample needs gamma or m".into())),
            };
            stratified_estimate(oracle, &plan, *scheme, &mut rng)?
        }
        MethodSpec::KGreedy { k, weights } => {
            let options = KGreedyOptions {
                weights: *weights,
                ..Default::default()
            };
            k_greedy_with(oracle, *k, options)?
        }
        MethodSpec::Ipss { gamma } => ipss(oracle, *gamma, &mut rng)?,
        MethodSpec::Tmc { rounds, trunc_tol } => {
            let tol = match trunc_tol {
                Some(t) => *t,
                None => default_trunc_tol(oracle.evaluate(Coalition::grand(oracle.n()))?),
            };
            extended_tmc(oracle, *rounds, tol, &mut rng)?
        }
        MethodSpec::CcShapley { gamma } => cc_shapley(oracle, *gamma, &mut rng)?,
    };
    if !spec.is_exact() {
        valuation.seed = Some(stream_seed);
    }
    Ok(valuation)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub repeat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_rider_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry_error: Option<f64>,
    pub valuation: Valuation,
}

/// Per-method summary over its repeats. Means are taken in repeat order;
/// `error_variance` divides by the number of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub runs: usize,
    pub mean_relative_error: Option<f64>,
    pub error_variance: Option<f64>,
    pub mean_evaluations: f64,
    pub mean_wall_ms: f64,
    pub mean_free_rider_error: Option<f64>,
    pub mean_symmetry_error: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_of(values: Option<Vec<f64>>) -> Option<f64> {
    values.map(|v| mean(&v))
}

/// Summary of `rows`, all of which belong to `method`.
pub fn aggregate(method: &str, rows: &[&RunRow]) -> Aggregate {
    let errors: Option<Vec<f64>> = rows.iter().map(|r| r.relative_error).collect();
    let error_variance = errors.as_ref().map(|e| {
        let m = mean(e);
        e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / e.len() as f64
    });
    let evaluations: Vec<f64> = rows.iter().map(|r| r.valuation.evaluations as f64).collect();
    let wall: Vec<f64> = rows.iter().map(|r| r.valuation.wall_ms).collect();
    Aggregate {
        method: method.to_string(),
        runs: rows.len(),
        mean_relative_error: mean_of(errors),
        error_variance,
        mean_evaluations: mean(&evaluations),
        mean_wall_ms: mean(&wall),
        mean_free_rider_error: mean_of(rows.iter().map(|r| r.free_rider_error).collect()),
        mean_symmetry_error: mean_of(rows.iter().map(|r| r.symmetry_error).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// The configuration that produced the report, without its output
    /// directory.
    pub config: ExperimentConfig,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Valuation>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn aggregate_for(&self, method: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    /// Writes `report.json` and `aggregates.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let mut csv = csv::Writer::from_path(dir.join("aggregates.csv"))?;
        for aggregate in &self.aggregates {
            csv.serialize(aggregate)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Runs every method of the matrix on an already loaded source.
pub fn execute(config: &ExperimentConfig, source: &Source) -> Result<ExperimentReport> {
    let oracle: &dyn UtilityOracle = source.oracle.as_ref();
    let n = oracle.n();
    let exact = if config.exact_reference {
        Some(exact_mc_sv(oracle)?)
    } else {
        None
    };

    let jobs: Vec<(usize, usize)> = (0..config.methods.len())
        .flat_map(|m| (0..config.repeats).map(move |r| (m, r)))
        .collect();
    let outcomes: Vec<Result<RunRow>> = jobs
        .par_iter()
        .map(|&(m, repeat)| {
            let spec = &config.methods[m];
            let label = spec.label();
            let wrap = |source: Error| Error::Method {
                method: label.clone(),
                repeat,
                source: Box::new(source),
            };
            let stream = derive_seed(config.seed, &label, repeat as u64);
            let valuation = run_method(spec, oracle, stream).map_err(wrap)?;
            let relative_error = match &exact {
                Some(e) => Some(relative_error(&valuation, e).map_err(wrap)?),
                None => None,
            };
            let FairnessProxies {
                free_rider_error,
                symmetry_error,
            } = fairness_proxies(&valuation, &source.null_clients, &source.duplicate_pairs)
                .map_err(wrap)?;
            Ok(RunRow {
                method: label,
                repeat,
                relative_error,
                free_rider_error,
                symmetry_error,
                valuation,
            })
        })
        .collect();
    let rows = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut aggregates = Vec::new();
    for spec in &config.methods {
        let label = spec.label();
        if aggregates.iter().any(|a: &Aggregate| a.method == label) {
            continue;
        }
        let mine: Vec<&RunRow> = rows.iter().filter(|r| r.method == label).collect();
        aggregates.push(aggregate(&label, &mine));
    }

    let mut recorded = config.clone();
    recorded.output_dir = None;
    Ok(ExperimentReport {
        config: recorded,
        n,
        exact,
        rows,
        aggregates,
    })
}

/// Loads the source, runs the matrix, and writes the report files when an
/// output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let source = load_source(config)?;
    let report = execute(config, &source)?;
    if let Some(dir) = &config.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    /// Method with its budget-free parameters, e.g. `sample(scheme=mc)`.
    pub method: String,
    pub gamma: u64,
    pub mean_error: f64,
    pub mean_time_ms: f64,
    pub mean_evals: f64,
}

fn family(spec: &MethodSpec) -> String {
    match spec {
        MethodSpec::Sample { scheme, .. } => format!("sample(scheme={scheme})"),
        MethodSpec::Tmc { trunc_tol: Some(t), .. } => format!("tmc(trunc_tol={t})"),
        other => other.name().to_string(),
    }
}

/// Runs each budget-driven method at every `gamma` and reports mean error
/// against the exact MC Shapley value, mean wall time, and mean evaluations.
/// Rows are sorted by `gamma`, methods in configured order within a budget.
pub fn pareto_sweep(config: &ExperimentConfig, gammas: &[u64]) -> Result<Vec<ParetoRow>> {
    if gammas.is_empty() {
        return Err(Error::Config("gamma grid is empty".into()));
    }
    if let Some(bad) = config.methods.iter().find(|m| !m.takes_gamma()) {
        return Err(Error::Config(format!(
            "pareto sweeps budget-driven methods only; `{}` has no budget",
            bad.name()
        )));
    }
    let source = load_source(config)?;
    let n = source.oracle.n();
    let mut sorted = gammas.to_vec();
    sorted.sort_unstable();

    let mut rows = Vec::new();
    for &gamma in &sorted {
        let mut step = config.clone();
        step.exact_reference = true;
        step.output_dir = None;
        step.methods = config
            .methods
            .iter()
            .map(|m| m.with_gamma(gamma, n))
            .collect::<Result<_>>()?;
        step.validate_for(n)?;
        let report = execute(&step, &source)?;
        for (base, spec) in config.methods.iter().zip(&step.methods) {
            let agg = report
                .aggregate_for(&spec.label())
                .expect("every method has an aggregate");
            rows.push(ParetoRow {
                method: family(base),
                gamma,
                mean_error: agg.mean_relative_error.expect("exact reference enabled"),
                mean_time_ms: agg.mean_wall_ms,
                mean_evals: agg.mean_evaluations,
            });
        }
    }
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join("pareto.csv"))?;
        for row in &rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
    }
    Ok(rows)
}

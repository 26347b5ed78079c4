//! Method matrix, metrics, and report emission.

mod config;
mod metrics;
mod run;

pub use config::{ExperimentConfig, MethodSpec, SEED_ENV};
pub use metrics::{fairness_proxies, relative_error, relative_error_values, FairnessProxies};
pub use run::{
    aggregate, execute, load_source, pareto_sweep, run_experiment, run_method, Aggregate,
    ExperimentReport, ParetoRow, RunRow, Source,
};

//! Shapley-value data valuation for simulated federated-learning clients.
//!
//! Clients are players in a coalition game whose utility is the test
//! performance of a model trained on the pooled data of a coalition. The
//! crate provides exact solvers, stratified and importance-pruned
//! estimators, sampling baselines, synthetic federations, and an experiment
//! harness that compares them.

pub mod baselines;
pub mod coalition;
pub mod error;
pub mod exact;
pub mod harness;
pub mod pruned;
pub mod scenario;
pub mod seed;
pub mod stratified;
pub mod utility;
pub mod valuation;

pub use coalition::{binomial, Coalition, Stratum, MAX_CLIENTS};
pub use error::{Error, Result};
pub use utility::UtilityOracle;
pub use valuation::Valuation;

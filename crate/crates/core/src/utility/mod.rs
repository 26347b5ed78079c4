//! Utility oracles: coalition -> model performance.
//!
//! Two concrete oracles are provided. [`TableOracle`] serves a fixed utility
//! table (worked examples, persisted caches). [`RegressionOracle`] trains a
//! pooled least-squares model on the clients of a coalition and scores it by
//! negative test MSE. [`Memoized`] wraps either one and guarantees at most one
//! inner evaluation per distinct coalition.

mod memo;
mod ols;
mod regression;
mod table;

use std::sync::Arc;

use crate::coalition::Coalition;
use crate::error::Result;

pub use memo::{memoize, Memoized, OracleStats};
pub use ols::{ols_fit, RIDGE_LAMBDA};
pub use regression::{regression_oracle, ClientData, RegressionFederation, RegressionOracle};
pub use table::{
    load_table, save_table, table_from_json, table_oracle, table_to_json, TableOracle, UtilityTable,
};

/// Deterministic coalition utility.
///
/// Implementations must be callable from several threads at once and must
/// never return a non-finite value.
pub trait UtilityOracle: Send + Sync {
    /// Number of clients in the federation.
    fn n(&self) -> usize;

    fn evaluate(&self, coalition: Coalition) -> Result<f64>;
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for &T {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        (**self).evaluate(coalition)
    }
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for Box<T> {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        (**self).evaluate(coalition)
    }
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for Arc<T> {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        (**self).evaluate(coalition)
    }
}

/// Oracle backed by a closure over the coalition bitmask. Handy for
/// synthetic games in tests and experiments.
pub struct FnOracle<F> {
    n: usize,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(Coalition) -> f64 + Send + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> UtilityOracle for FnOracle<F>
where
    F: Fn(Coalition) -> f64 + Send + Sync,
{
    fn n(&self) -> usize {
        self.n
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        let value = (self.f)(coalition);
        if !value.is_finite() {
            return Err(crate::error::Error::Data(format!(
                "utility of {coalition} is not finite"
            )));
        }
        Ok(value)
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Per-client values produced by one solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub method: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub values: Vec<f64>,
    /// Distinct coalitions whose utility the run needed.
    pub evaluations: u64,
    pub wall_ms: f64,
    /// Method-specific metadata (scheme, plan, budget, ...).
    #[serde(flatten)]
    pub details: BTreeMap<String, Value>,
}

impl Valuation {
    pub(crate) fn new(method: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("value of client {} is not finite", i + 1)));
        }
        Ok(Self {
            method: method.into(),
            n: values.len(),
            seed: None,
            values,
            evaluations: 0,
            wall_ms: 0.0,
            details: BTreeMap::new(),
        })
    }

    pub(crate) fn with_detail(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).expect("detail serializes");
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactLimits;
use crate::pruned::GreedyWeights;
use crate::scenario::ScenarioConfig;
use crate::stratified::Scheme;

/// Environment variable that replaces the configured base seed.
pub const SEED_ENV: &str = "SHAPVAL_SEED";

/// One entry of the method matrix, tagged by `"method"` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    ExactMc,
    ExactCc,
    ExactPerm,
    /// Stratified sampling with either `gamma` (default plan) or explicit
    /// per-stratum rounds `m`.
    Sample {
        scheme: Scheme,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<Vec<u64>>,
    },
    #[serde(rename = "kgreedy")]
    KGreedy {
        #[serde(rename = "K")]
        k: usize,
        #[serde(default, skip_serializing_if = "is_default_weights")]
        weights: GreedyWeights,
    },
    Ipss {
        gamma: u64,
    },
    Tmc {
        rounds: u64,
        /// Defaults to `1e-3 · |U(N)|`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trunc_tol: Option<f64>,
    },
    #[serde(rename = "ccshapley")]
    CcShapley {
        gamma: u64,
    },
}

fn is_default_weights(w: &GreedyWeights) -> bool {
    *w == GreedyWeights::default()
}

impl MethodSpec {
    /// Method name as used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::ExactMc => "exact_mc",
            MethodSpec::ExactCc => "exact_cc",
            MethodSpec::ExactPerm => "exact_perm",
            MethodSpec::Sample { .. } => "sample",
            MethodSpec::KGreedy { .. } => "kgreedy",
            MethodSpec::Ipss { .. } => "ipss",
            MethodSpec::Tmc { .. } => "tmc",
            MethodSpec::CcShapley { .. } => "ccshapley",
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, MethodSpec::ExactMc | MethodSpec::ExactCc | MethodSpec::ExactPerm)
    }

    /// Whether the method is driven by a sampling budget `gamma`.
    pub fn takes_gamma(&self) -> bool {
        matches!(
            self,
            MethodSpec::Sample { .. } | MethodSpec::Ipss { .. } | MethodSpec::Tmc { .. } | MethodSpec::CcShapley { .. }
        )
    }

    /// Copy of a budget-driven method set to budget `gamma`. Extended-TMC
    /// gets `max(1, gamma / n)` orderings, each walk costing up to `n`
    /// evaluations.
    pub fn with_gamma(&self, gamma: u64, n: usize) -> Result<MethodSpec> {
        Ok(match self {
            MethodSpec::Sample { scheme, .. } => MethodSpec::Sample {
                scheme: *scheme,
                gamma: Some(gamma),
                m: None,
            },
            MethodSpec::Ipss { .. } => MethodSpec::Ipss { gamma },
            MethodSpec::CcShapley { .. } => MethodSpec::CcShapley { gamma },
            MethodSpec::Tmc { trunc_tol, .. } => MethodSpec::Tmc {
                rounds: (gamma / n as u64).max(1),
                trunc_tol: *trunc_tol,
            },
            other => {
                return Err(Error::Config(format!(
                    "method `{}` has no sampling budget to sweep",
                    other.name()
                )))
            }
        })
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.label())));
        match self {
            MethodSpec::Sample { gamma, m, .. } => match (gamma, m) {
                (Some(0), None) => bad("gamma must be at least 1".into()),
                (Some(_), None) => Ok(()),
                (None, Some(m)) if m.len() != n => {
                    bad(format!("m lists {} strata, expected {n}", m.len()))
                }
                (None, Some(_)) => Ok(()),
                _ => bad("give exactly one of gamma or m".into()),
            },
            MethodSpec::KGreedy { k, .. } if *k == 0 || *k > n => bad(format!("K outside 1..={n}")),
            MethodSpec::Ipss { gamma } if *gamma < n as u64 + 1 => {
                bad(format!("gamma must be at least n + 1 = {}", n + 1))
            }
            MethodSpec::Tmc { rounds, trunc_tol } => {
                if *rounds == 0 {
                    bad("rounds must be at least 1".into())
                } else if trunc_tol.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
                    bad("trunc_tol must be finite and >= 0".into())
                } else {
                    Ok(())
                }
            }
            MethodSpec::CcShapley { gamma } if *gamma == 0 => bad("gamma must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// Name plus parameters; identifies the method's random stream and its
    /// report rows.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Sample { scheme, gamma, m } => match (gamma, m) {
                (_, Some(m)) => {
                    let m: Vec<String> = m.iter().map(u64::to_string).collect();
                    write!(f, "sample(scheme={scheme},m=[{}])", m.join(","))
                }
                (Some(g), None) => write!(f, "sample(scheme={scheme},gamma={g})"),
                (None, None) => write!(f, "sample(scheme={scheme})"),
            },
            MethodSpec::KGreedy { k, weights } => match weights {
                GreedyWeights::Shapley => write!(f, "kgreedy(K={k})"),
                GreedyWeights::PrintedListing => write!(f, "kgreedy(K={k},weights=printed_listing)"),
            },
            MethodSpec::Ipss { gamma } => write!(f, "ipss(gamma={gamma})"),
            MethodSpec::Tmc { rounds, trunc_tol } => match trunc_tol {
                Some(t) => write!(f, "tmc(rounds={rounds},trunc_tol={t})"),
                None => write!(f, "tmc(rounds={rounds})"),
            },
            MethodSpec::CcShapley { gamma } => write!(f, "ccshapley(gamma={gamma})"),
            exact => f.write_str(exact.name()),
        }
    }
}

fn default_repeats() -> usize {
    1
}

/// A method matrix over one utility source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Synthetic federation to value. Exactly one of `scenario` and `table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    /// Utility table file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Compute exact MC Shapley values and relative errors against them.
    #[serde(default)]
    pub exact_reference: bool,
    /// 1-based clients that hold no data (scenario sources) or are only
    /// designated as such (tables).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub null_clients: Vec<usize>,
    /// 1-based `[i, j]`: client `j` holds a copy of client `i`'s data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub duplicate_pairs: Vec<[usize; 2]>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative table path is taken relative to the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(table), Some(dir)) = (&config.table, path.parent()) {
            if table.is_relative() {
                config.table = Some(dir.join(table));
            }
        }
        Ok(config)
    }

    /// Applies `SHAPVAL_SEED` when set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(text) = std::env::var(SEED_ENV) {
            self.seed = text
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={text} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Checks everything that does not need the utility source; `n` is
    /// checked once the source is loaded.
    pub fn validate(&self) -> Result<()> {
        match (&self.scenario, &self.table) {
            (Some(s), None) => s.validate()?,
            (None, Some(_)) => {}
            _ => return Err(Error::Config("give exactly one of scenario or table".into())),
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn validate_for(&self, n: usize) -> Result<()> {
        for method in &self.methods {
            method.validate(n)?;
        }
        if self.exact_reference && n > ExactLimits::default().max_subset_n {
            return Err(Error::Config(format!(
                "exact reference needs n <= {}, source has n = {n}",
                ExactLimits::default().max_subset_n
            )));
        }
        let in_range = |i: usize| (1..=n).contains(&i);
        if let Some(j) = self.null_clients.iter().find(|&&j| !in_range(j)) {
            return Err(Error::Config(format!("null client {j} outside 1..={n}")));
        }
        for &[i, j] in &self.duplicate_pairs {
            if !in_range(i) || !in_range(j) || i == j {
                return Err(Error::Config(format!("duplicate pair [{i}, {j}] invalid for n = {n}")));
            }
        }
        Ok(())
    }
}

use nalgebra::{DMatrix, DVector};

use super::ols::solve_normal_equations;
use super::UtilityOracle;
use crate::coalition::{Coalition, MAX_CLIENTS};
use crate::error::{Error, Result};

/// One client's local regression dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientData {
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
}

impl ClientData {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in client data".into()));
        }
        Ok(Self { features, targets })
    }

    pub fn empty(d: usize) -> Self {
        Self {
            features: DMatrix::zeros(0, d),
            targets: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `Σ_j |x_j · w - y_j|` over this dataset.
    pub fn absolute_residual_sum(&self, coefficients: &DVector<f64>) -> f64 {
        (&self.features * coefficients - &self.targets).abs().sum()
    }
}

/// A synthetic federation: per-client linear-regression data plus a shared
/// held-out test set whose targets are the noiseless responses `x · w*`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFederation {
    t: usize,
    d: usize,
    sigma: f64,
    true_coefficients: DVector<f64>,
    clients: Vec<ClientData>,
    test_features: DMatrix<f64>,
    test_targets: DVector<f64>,
    m0: f64,
}

impl RegressionFederation {
    /// `t` is the nominal per-client sample count the federation was
    /// generated with; individual clients may hold more or fewer rows.
    pub fn new(
        t: usize,
        sigma: f64,
        true_coefficients: DVector<f64>,
        clients: Vec<ClientData>,
        test_features: DMatrix<f64>,
        test_targets: DVector<f64>,
    ) -> Result<Self> {
        let d = true_coefficients.len();
        if clients.is_empty() || clients.len() > MAX_CLIENTS {
            return Err(Error::InvalidArgument(format!(
                "client count {} outside 1..={MAX_CLIENTS}",
                clients.len()
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if let Some(bad) = clients.iter().position(|c| c.features.ncols() != d) {
            return Err(Error::Data(format!(
                "client {} has {} features, expected {d}",
                bad + 1,
                clients[bad].features.ncols()
            )));
        }
        if test_features.ncols() != d || test_features.nrows() != test_targets.len() {
            return Err(Error::Data("test set shape does not match the federation".into()));
        }
        if test_targets.is_empty() {
            return Err(Error::Data("test set is empty".into()));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} must be finite and >= 0")));
        }
        let mut fed = Self {
            t,
            d,
            sigma,
            true_coefficients,
            clients,
            test_features,
            test_targets,
            m0: 0.0,
        };
        fed.m0 = fed.test_mse(&DVector::zeros(d));
        if !fed.m0.is_finite() {
            return Err(Error::Data("test set produces a non-finite MSE".into()));
        }
        Ok(fed)
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// MSE of the zero-coefficient (initialized) model on the test set.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn true_coefficients(&self) -> &DVector<f64> {
        &self.true_coefficients
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.clients.iter().map(ClientData::len).collect()
    }

    pub fn test_features(&self) -> &DMatrix<f64> {
        &self.test_features
    }

    pub fn test_targets(&self) -> &DVector<f64> {
        &self.test_targets
    }

    pub fn test_mse(&self, coefficients: &DVector<f64>) -> f64 {
        let residual = &self.test_features * coefficients - &self.test_targets;
        residual.norm_squared() / self.test_targets.len() as f64
    }

    /// Pooled training data of a coalition, clients in ascending order.
    pub fn pooled(&self, coalition: Coalition) -> ClientData {
        let members: Vec<&ClientData> = coalition.members().map(|i| &self.clients[i]).collect();
        let rows: usize = members.iter().map(|c| c.len()).sum();
        let mut features = DMatrix::zeros(rows, self.d);
        let mut targets = DVector::zeros(rows);
        let mut offset = 0;
        for client in members {
            let len = client.len();
            features.rows_mut(offset, len).copy_from(&client.features);
            targets.rows_mut(offset, len).copy_from(&client.targets);
            offset += len;
        }
        ClientData { features, targets }
    }

    /// Copy with client `j` (0-based) holding no data.
    pub fn with_null_client(&self, j: usize) -> Result<Self> {
        self.check_index(j)?;
        let mut fed = self.clone();
        fed.clients[j] = ClientData::empty(self.d);
        Ok(fed)
    }

    /// Copy where client `j` holds an exact copy of client `i`'s data.
    pub fn with_duplicate(&self, i: usize, j: usize) -> Result<Self> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "cannot duplicate client {} onto itself",
                i + 1
            )));
        }
        let mut fed = self.clone();
        fed.clients[j] = self.clients[i].clone();
        Ok(fed)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "client index {} outside 1..={}",
                i + 1,
                self.n()
            )));
        }
        Ok(())
    }
}

/// Negative test MSE of the OLS model trained on a coalition's pooled data.
///
/// Per-client sufficient statistics (`XᵀX`, `Xᵀy`) are precomputed, so one
/// evaluation costs O(|S| d² + d³ + |test| d).
#[derive(Clone, Debug)]
pub struct RegressionOracle {
    federation: RegressionFederation,
    grams: Vec<DMatrix<f64>>,
    moments: Vec<DVector<f64>>,
}

pub fn regression_oracle(federation: RegressionFederation) -> RegressionOracle {
    let grams = federation
        .clients
        .iter()
        .map(|c| c.features.transpose() * &c.features)
        .collect();
    let moments = federation
        .clients
        .iter()
        .map(|c| c.features.transpose() * &c.targets)
        .collect();
    RegressionOracle {
        federation,
        grams,
        moments,
    }
}

impl RegressionOracle {
    pub fn federation(&self) -> &RegressionFederation {
        &self.federation
    }

    /// Coefficients of the model trained on `coalition`.
    pub fn fit(&self, coalition: Coalition) -> DVector<f64> {
        let d = self.federation.d;
        let mut gram = DMatrix::zeros(d, d);
        let mut moment = DVector::zeros(d);
        let mut rows = 0;
        for i in coalition.members() {
            gram += &self.grams[i];
            moment += &self.moments[i];
            rows += self.federation.clients[i].len();
        }
        solve_normal_equations(&gram, &moment, rows)
    }
}

impl UtilityOracle for RegressionOracle {
    fn n(&self) -> usize {
        self.federation.n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        if coalition.n() != self.n() {
            return Err(Error::InvalidCoalition(format!(
                "{coalition} is not a coalition of {} clients",
                self.n()
            )));
        }
        if coalition.is_empty() {
            return Ok(-self.federation.m0);
        }
        let mse = self.federation.test_mse(&self.fit(coalition));
        if !mse.is_finite() {
            return Err(Error::Data(format!("non-finite MSE for {coalition}")));
        }
        Ok(-mse)
    }
}

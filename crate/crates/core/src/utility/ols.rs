use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge term added to singular normal equations.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Least-squares coefficients for `features * w ≈ targets` through the
/// normal equations. No rows yields the zero vector (the initialized model).
pub fn ols_fit(features: &DMatrix<f64>, targets: &DVector<f64>) -> Result<DVector<f64>> {
    if features.nrows() != targets.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression data".into()));
    }
    let gram = features.transpose() * features;
    let moment = features.transpose() * targets;
    Ok(solve_normal_equations(&gram, &moment, features.nrows()))
}

/// Solves `gram * w = moment` where `gram = XᵀX` was accumulated from `rows`
/// observations.
pub(crate) fn solve_normal_equations(
    gram: &DMatrix<f64>,
    moment: &DVector<f64>,
    rows: usize,
) -> DVector<f64> {
    let d = gram.nrows();
    if rows == 0 {
        return DVector::zeros(d);
    }
    if rows >= d {
        if let Some(chol) = gram.clone().cholesky() {
            return chol.solve(moment);
        }
    }
    let ridged = gram + DMatrix::identity(d, d) * RIDGE_LAMBDA;
    match ridged.clone().cholesky() {
        Some(chol) => chol.solve(moment),
        None => ridged
            .lu()
            .solve(moment)
            .unwrap_or_else(|| DVector::zeros(d)),
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::valuation::Valuation;

/// `‖φ̂ - φ‖₂ / ‖φ‖₂`.
pub fn relative_error(estimate: &Valuation, exact: &Valuation) -> Result<f64> {
    relative_error_values(&estimate.values, &exact.values)
}

pub fn relative_error_values(estimate: &[f64], exact: &[f64]) -> Result<f64> {
    if estimate.len() != exact.len() {
        return Err(Error::InvalidArgument(format!(
            "estimate has {} clients, reference has {}",
            estimate.len(),
            exact.len()
        )));
    }
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let diff = estimate
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Fairness checks on clients designated as free riders (no data) or as
/// duplicates of each other. A proxy is absent when nothing was designated
/// for it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessProxies {
    /// `max_j |φ̂_j|` over null clients.
    pub free_rider_error: Option<f64>,
    /// `max |φ̂_i - φ̂_j|` over duplicate pairs.
    pub symmetry_error: Option<f64>,
}

impl FairnessProxies {
    pub fn is_empty(&self) -> bool {
        self.free_rider_error.is_none() && self.symmetry_error.is_none()
    }
}

/// Client indices are 0-based.
pub fn fairness_proxies(
    estimate: &Valuation,
    null_clients: &[usize],
    duplicate_pairs: &[(usize, usize)],
) -> Result<FairnessProxies> {
    let n = estimate.values.len();
    let check = |i: usize| {
        if i >= n {
            Err(Error::InvalidArgument(format!("client {} outside 1..={n}", i + 1)))
        } else {
            Ok(())
        }
    };
    for &j in null_clients {
        check(j)?;
    }
    for &(i, j) in duplicate_pairs {
        check(i)?;
        check(j)?;
    }
    let v = &estimate.values;
    let free_rider_error = (!null_clients.is_empty())
        .then(|| null_clients.iter().fold(0.0f64, |acc, &j| acc.max(v[j].abs())));
    let symmetry_error = (!duplicate_pairs.is_empty()).then(|| {
        duplicate_pairs
            .iter()
            .fold(0.0f64, |acc, &(i, j)| acc.max((v[i] - v[j]).abs()))
    });
    Ok(FairnessProxies {
        free_rider_error,
        symmetry_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valuation(values: &[f64]) -> Valuation {
        Valuation::new("test", values.to_vec()).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        let exact = valuation(&[0.22, 0.32, 0.32]);
        assert_eq!(relative_error(&exact, &exact).unwrap(), 0.0);
        let zero = valuation(&[0.0; 3]);
        assert!((relative_error(&zero, &exact).unwrap() - 1.0).abs() < 1e-15);
        let near = valuation(&[0.24, 0.32, 0.32]);
        let expected = 0.02 / (0.22f64.powi(2) + 2.0 * 0.32f64.powi(2)).sqrt();
        assert!((relative_error(&near, &exact).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.03975).abs() < 1e-5);
        assert!(matches!(relative_error(&exact, &zero), Err(Error::UndefinedMetric)));
        assert!(relative_error(&valuation(&[1.0]), &exact).is_err());
    }

    #[test]
    fn proxies() {
        let v = valuation(&[0.0, 0.3, 0.3, -0.01]);
        let p = fairness_proxies(&v, &[0, 3], &[(1, 2)]).unwrap();
        assert_eq!(p.free_rider_error, Some(0.01));
        assert_eq!(p.symmetry_error, Some(0.0));
        let none = fairness_proxies(&v, &[], &[]).unwrap();
        assert!(none.is_empty());
        assert!(fairness_proxies(&v, &[4], &[]).is_err());
        assert!(fairness_proxies(&v, &[], &[(0, 9)]).is_err());
    }
}

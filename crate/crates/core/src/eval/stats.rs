use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, min_eigenvalue};

/// Normalized estimation error squared `eᵀΣ⁻¹e`.
pub fn nees(error: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if cov.nrows() != error.len() || !cov.is_square() {
        return Err(Error::Dimension(format!("error of dim {} with covariance {:?}", error.len(), cov.shape())));
    }
    let chol = cholesky(cov).ok_or_else(|| Error::NotPositiveDefinite("NEES covariance".into()))?;
    Ok(error.dot(&chol.solve(error)))
}

/// Two-sided chi-square bounds on the NEES averaged over `runs` runs of a
/// `dim`-dimensional estimate: `χ²_{runs·dim}(α/2)/runs` and `χ²_{runs·dim}(1−α/2)/runs`.
pub fn nees_bounds(runs: usize, dim: usize, confidence: f64) -> Result<(f64, f64)> {
    if runs == 0 || dim == 0 || !(0.0 < confidence && confidence < 1.0) {
        return Err(Error::Config(format!("NEES bounds need runs, dim > 0 and confidence in (0, 1); got {runs}, {dim}, {confidence}")));
    }
    let dof = (runs * dim) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::Config(e.to_string()))?;
    let alpha = 1.0 - confidence;
    let m = runs as f64;
    Ok((chi.inverse_cdf(alpha / 2.0) / m, chi.inverse_cdf(1.0 - alpha / 2.0) / m))
}

/// Smallest eigenvalue of `Σ_local − Σ_cent`; non-negative means conservative.
pub fn conservativeness(local: &DMatrix<f64>, central: &DMatrix<f64>) -> Result<f64> {
    if local.shape() != central.shape() || !local.is_square() {
        return Err(Error::Scope(format!("covariances of shape {:?} and {:?}", local.shape(), central.shape())));
    }
    Ok(min_eigenvalue(&(local - central)))
}

/// Root mean of squared errors; zero for an empty slice.
pub fn rmse(squared_errors: &[f64]) -> f64 {
    if squared_errors.is_empty() {
        return 0.0;
    }
    (squared_errors.iter().sum::<f64>() / squared_errors.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_estimate_has_zero_nees() {
        let e = DVector::zeros(3);
        assert_eq!(nees(&e, &DMatrix::identity(3, 3)).unwrap(), 0.0);
        let (lo, _) = nees_bounds(250, 3, 0.95).unwrap();
        assert!(lo > 0.0);
    }

    #[test]
    fn nees_scales_with_inverse_covariance() {
        let e = DVector::from_column_slice(&[2.0, 0.0]);
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 1.0]));
        assert!((nees(&e, &cov).unwrap() - 1.0).abs() < 1e-14);
        assert!(nees(&e, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn bounds_bracket_dimension() {
        let (lo, hi) = nees_bounds(250, 4, 0.95).unwrap();
        assert!(lo < 4.0 && 4.0 < hi);
        // Wilson–Hilferty approximation of the same quantiles.
        let k = 1000.0f64;
        let z = 1.959963984540054;
        let wh = |z: f64| k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3) / 250.0;
        assert!((lo - wh(-z)).abs() < 1e-3);
        assert!((hi - wh(z)).abs() < 1e-3);
    }

    #[test]
    fn conservativeness_examples() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(conservativeness(&c, &c).unwrap().abs() < 1e-14);
        let bigger = &c + DMatrix::identity(2, 2);
        assert!((conservativeness(&bigger, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(conservativeness(&c, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[]), 0.0);
        assert_eq!(rmse(&[0.0, 0.0]), 0.0);
        assert_eq!(rmse(&[9.0]), 3.0);
    }
}

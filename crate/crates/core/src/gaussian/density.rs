use nalgebra::{DMatrix, DVector};

use super::factor::CanonicalFactor;
use super::key::{scope_dim, VariableKey};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrized};

/// A canonical-form Gaussian whose information matrix is positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalDensity(CanonicalFactor);

impl CanonicalDensity {
    pub fn new(factor: CanonicalFactor) -> Result<Self> {
        if factor.dim() > 0 && cholesky(factor.lambda()).is_none() {
            return Err(Error::NotPositiveDefinite(format!(
                "information matrix over {:?}",
                factor.scope().iter().map(ToString::to_string).collect::<Vec<_>>()
            )));
        }
        Ok(CanonicalDensity(factor))
    }

    pub fn factor(&self) -> &CanonicalFactor {
        &self.0
    }

    pub fn into_factor(self) -> CanonicalFactor {
        self.0
    }

    pub fn scope(&self) -> &[VariableKey] {
        self.0.scope()
    }

    pub fn zeta(&self) -> &DVector<f64> {
        self.0.zeta()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        self.0.lambda()
    }

    pub fn mean(&self) -> DVector<f64> {
        match cholesky(self.lambda()) {
            Some(c) => c.solve(self.zeta()),
            None => DVector::zeros(0),
        }
    }

    pub fn to_moments(&self) -> MomentGaussian {
        if self.0.dim() == 0 {
            return MomentGaussian {
                scope: Vec::new(),
                mean: DVector::zeros(0),
                covariance: DMatrix::zeros(0, 0),
            };
        }
        let chol = cholesky(self.lambda()).expect("density invariant: positive definite");
        let mean = chol.solve(self.zeta());
        let covariance = symmetrized(chol.inverse());
        MomentGaussian {
            scope: self.scope().to_vec(),
            mean,
            covariance,
        }
    }

    pub fn from_moments(m: &MomentGaussian) -> CanonicalDensity {
        if m.mean.len() == 0 {
            return CanonicalDensity(CanonicalFactor::empty());
        }
        let chol = cholesky(&m.covariance).expect("moment invariant: positive definite");
        let lambda = symmetrized(chol.inverse());
        let zeta = chol.solve(&m.mean);
        CanonicalDensity(
            CanonicalFactor::new(m.scope.clone(), zeta, lambda).expect("consistent dimensions"),
        )
    }
}

/// Gaussian in moment form over an ordered scope.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentGaussian {
    scope: Vec<VariableKey>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl MomentGaussian {
    pub fn new(scope: Vec<VariableKey>, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = scope_dim(&scope);
        if mean.len() != n || covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension(format!(
                "moment Gaussian of dim {n} with mean {} and covariance {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let covariance = symmetrized(covariance);
        if n > 0 && cholesky(&covariance).is_none() {
            return Err(Error::NotPositiveDefinite("covariance".into()));
        }
        Ok(MomentGaussian {
            scope,
            mean,
            covariance,
        })
    }

    pub fn scope(&self) -> &[VariableKey] {
        &self.scope
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Mean and covariance of a subset of blocks (in the order given).
    pub fn select(&self, keys: &[VariableKey]) -> Result<MomentGaussian> {
        let offsets = super::key::scope_offsets(&self.scope);
        let mut idx = Vec::new();
        for k in keys {
            let p = self
                .scope
                .iter()
                .position(|s| s == k)
                .ok_or_else(|| Error::Scope(format!("{k} not in moment scope")))?;
            idx.extend(offsets[p]..offsets[p] + self.scope[p].dim());
        }
        Ok(MomentGaussian {
            scope: keys.to_vec(),
            mean: self.mean.select_rows(&idx),
            covariance: self.covariance.select_rows(&idx).select_columns(&idx),
        })
    }
}

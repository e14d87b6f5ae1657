//! Small dense linear-algebra helpers shared by the Gaussian and filtering code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Largest condition number tolerated when inverting an elimination block.
pub const MAX_CONDITION: f64 = 1e12;

/// Eigenvalue floor used when forming inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || cholesky(m).is_some()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// `m^{-1/2}` for a symmetric positive definite matrix, with eigenvalues floored at
/// [`EIGEN_FLOOR`].
pub fn inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| 1.0 / v.max(EIGEN_FLOOR).sqrt()),
    );
    let v = &eig.eigenvectors;
    symmetrized(v * DMatrix::from_diagonal(&scaled) * v.transpose())
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    cholesky(m).map(|c| symmetrized(c.inverse()))
}

/// Solver for a symmetric (possibly indefinite) block, with a condition check.
pub(crate) enum SymmetricSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen {
        vectors: DMatrix<f64>,
        inv_values: DVector<f64>,
    },
}

impl SymmetricSolver {
    /// Factorizes `m`; returns the condition estimate on failure.
    pub(crate) fn new(m: &DMatrix<f64>) -> Result<Self, f64> {
        if let Some(chol) = cholesky(m) {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
            let condition = (hi / lo).powi(2);
            if condition.is_finite() && condition < MAX_CONDITION {
                return Ok(SymmetricSolver::Cholesky(chol));
            }
            return Err(condition);
        }
        // Indefinite potentials still eliminate as long as the block is invertible.
        let eig = SymmetricEigen::new(m.clone());
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v.abs()), hi.max(v.abs()))
            });
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(condition);
        }
        let inv_values = eig.eigenvalues.map(|v| 1.0 / v);
        Ok(SymmetricSolver::Eigen {
            vectors: eig.eigenvectors,
            inv_values,
        })
    }

    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymmetricSolver::Cholesky(c) => c.solve(rhs),
            SymmetricSolver::Eigen {
                vectors,
                inv_values,
            } => {
                let mut tmp = vectors.transpose() * rhs;
                for (i, s) in inv_values.iter().enumerate() {
                    tmp.row_mut(i).scale_mut(*s);
                }
                vectors * tmp
            }
        }
    }
}

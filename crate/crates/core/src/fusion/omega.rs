use nalgebra::DMatrix;

use super::OmegaCost;
use crate::error::{Error, Result};
use crate::gaussian::CanonicalDensity;
use crate::linalg::cholesky;

const TOLERANCE: f64 = 1e-6;

fn cost_of(local: &DMatrix<f64>, remote: &DMatrix<f64>, omega: f64, cost: OmegaCost) -> f64 {
    let fused = local * omega + remote * (1.0 - omega);
    let Some(chol) = cholesky(&fused) else {
        return f64::INFINITY;
    };
    match cost {
        OmegaCost::Trace => chol.inverse().trace(),
        OmegaCost::LogDet => -2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
    }
}

/// Weight `ω ∈ [0, 1]` minimizing the trace or log-determinant of
/// `(ωΛ_local + (1 − ω)Λ_remote)⁻¹`.
///
/// Both costs are convex in `ω`, so golden-section search plus a comparison with
/// the endpoints finds the global minimum. A flat objective returns 0.5.
pub fn optimize_omega(local: &CanonicalDensity, remote: &CanonicalDensity, cost: OmegaCost) -> Result<f64> {
    if local.scope() != remote.scope() {
        return Err(Error::Fusion("covariance intersection over different scopes".into()));
    }
    let remote_lambda = remote
        .factor()
        .align_scope(local.scope())
        .map_err(|e| Error::Fusion(e.to_string()))?
        .into_parts()
        .2;
    let (l, r) = (local.lambda(), &remote_lambda);
    let f = |w: f64| cost_of(l, r, w, cost);

    let (c0, c1, ch) = (f(0.0), f(1.0), f(0.5));
    let scale = c0.abs().max(c1.abs()).max(1e-300);
    if (c0 - ch).abs() <= 1e-12 * scale && (c1 - ch).abs() <= 1e-12 * scale {
        return Ok(0.5);
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > TOLERANCE {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(mid, f(mid)), (0.0, c0), (1.0, c1)];
    let best = candidates
        .iter()
        .copied()
        .fold((mid, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    if !best.1.is_finite() {
        return Err(Error::NotPositiveDefinite("covariance intersection inputs".into()));
    }
    Ok(best.0)
}

//! Prediction, measurement and roll-up on a factor graph, plus the conservative
//! filtering step that keeps a robot's graph sparse without overstating information.

mod conservative;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{scope_dim, CanonicalFactor, VariableKey};
use crate::graph::FactorGraph;
use crate::linalg::spd_inverse;

pub use conservative::{
    conservative_filter, decouple_hidden, deflate_channel, deflation_constant, regain_conditional_independence,
    ConservativeReport, SparsityPattern,
};

/// `x_{k+1} = F x_k + G u + w`, `w ~ N(0, Q)`.
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub u: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, u: DVector<f64>, q: DMatrix<f64>) -> Self {
        LinearDynamics { f, g, u, q }
    }

    /// Dynamics with a known additive offset `Gu` and no separate control matrix.
    pub fn with_offset(f: DMatrix<f64>, gu: DVector<f64>, q: DMatrix<f64>) -> Self {
        let n = gu.len();
        LinearDynamics {
            f,
            g: DMatrix::identity(n, n),
            u: gu,
            q,
        }
    }

    /// Time-invariant dynamics with no control input.
    pub fn autonomous(f: DMatrix<f64>, q: DMatrix<f64>) -> Self {
        let n = f.nrows();
        Self::with_offset(f, DVector::zeros(n), q)
    }

    pub fn offset(&self) -> DVector<f64> {
        &self.g * &self.u
    }

    fn check(&self, dim: usize) -> Result<()> {
        let gu_len = if self.g.ncols() == self.u.len() { self.g.nrows() } else { usize::MAX };
        if self.f.shape() != (dim, dim) || self.q.shape() != (dim, dim) || gu_len != dim {
            return Err(Error::Dimension(format!(
                "dynamics F {:?}, G {:?}, u {}, Q {:?} for a {dim}-dim state",
                self.f.shape(),
                self.g.shape(),
                self.u.len(),
                self.q.shape()
            )));
        }
        Ok(())
    }
}

/// `y = H x + v`, `v ~ N(0, R)`.
#[derive(Clone, Debug)]
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl LinearMeasurement {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>, y: DVector<f64>) -> Self {
        LinearMeasurement { h, r, y }
    }
}

fn noise_information(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(cov).ok_or_else(|| Error::NotPositiveDefinite(format!("{what} noise covariance")))
}

/// The three prediction factors for moving `from` one step forward.
pub fn prediction_factors(from: &VariableKey, dynamics: &LinearDynamics) -> Result<[CanonicalFactor; 3]> {
    let n = from.dim();
    dynamics.check(n)?;
    let to = from.at(from.timestep() + 1);
    let q_inv = noise_information(&dynamics.q, "process")?;
    let gu = dynamics.offset();
    let ft_qinv = dynamics.f.transpose() * &q_inv;
    let past = CanonicalFactor::new(vec![from.clone()], -(&ft_qinv * &gu), &ft_qinv * &dynamics.f)?;
    let next = CanonicalFactor::new(vec![to.clone()], &q_inv * &gu, q_inv.clone())?;
    let mut cross = DMatrix::zeros(2 * n, 2 * n);
    let off = -(&q_inv * &dynamics.f);
    cross.view_mut((n, 0), (n, n)).copy_from(&off);
    cross.view_mut((0, n), (n, n)).copy_from(&off.transpose());
    let binary = CanonicalFactor::new(vec![from.clone(), to], DVector::zeros(2 * n), cross)?;
    Ok([past, next, binary])
}

/// Adds the prediction factors for `from` and returns the new variable one step later.
pub fn add_prediction(g: &mut FactorGraph, from: &VariableKey, dynamics: &LinearDynamics) -> Result<VariableKey> {
    let from = g
        .variable(from)
        .cloned()
        .ok_or_else(|| Error::Scope(format!("cannot predict {from}: not in the graph")))?;
    let factors = prediction_factors(&from, dynamics)?;
    let to = from.at(from.timestep() + 1);
    g.add_variable(to.clone())?;
    for f in factors {
        g.add_factor(f)?;
    }
    Ok(to)
}

/// Measurement factor `{HᵀR⁻¹y, HᵀR⁻¹H}`; columns of `H` follow `vars` in order.
pub fn measurement_factor(vars: &[VariableKey], m: &LinearMeasurement) -> Result<CanonicalFactor> {
    let n = scope_dim(vars);
    let rows = m.y.len();
    if m.h.shape() != (rows, n) || m.r.shape() != (rows, rows) {
        return Err(Error::Dimension(format!(
            "measurement H {:?}, R {:?}, y {} over {n} states",
            m.h.shape(),
            m.r.shape(),
            rows
        )));
    }
    let r_inv = noise_information(&m.r, "measurement")?;
    let ht_rinv = m.h.transpose() * r_inv;
    CanonicalFactor::new(vars.to_vec(), &ht_rinv * &m.y, &ht_rinv * &m.h)
}

pub fn add_measurement(g: &mut FactorGraph, vars: &[VariableKey], m: &LinearMeasurement) -> Result<()> {
    g.add_factor(measurement_factor(vars, m)?)?;
    Ok(())
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A measurement model linearized about `x_hat`.
pub struct Linearization<'a> {
    /// `h(x̂)`.
    pub predicted: DVector<f64>,
    /// `∂h/∂x` at `x̂`, columns following the measured variables.
    pub jacobian: DMatrix<f64>,
    pub x_hat: &'a DVector<f64>,
    /// Rows of `y` holding angles; their residuals are wrapped.
    pub angle_rows: &'a [usize],
}

/// Linearized factor `{JᵀR⁻¹(y − h(x̂) + J x̂), JᵀR⁻¹J}`.
pub fn linearized_measurement_factor(
    vars: &[VariableKey],
    lin: &Linearization<'_>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<CanonicalFactor> {
    let n = scope_dim(vars);
    if lin.jacobian.shape() != (y.len(), n) || lin.x_hat.len() != n || lin.predicted.len() != y.len() {
        return Err(Error::Dimension(format!(
            "Jacobian {:?} for {} measurements over {n} states",
            lin.jacobian.shape(),
            y.len()
        )));
    }
    let mut residual = y - &lin.predicted;
    for &row in lin.angle_rows {
        residual[row] = wrap_angle(residual[row]);
    }
    let pseudo = residual + &lin.jacobian * lin.x_hat;
    measurement_factor(vars, &LinearMeasurement::new(lin.jacobian.clone(), r.clone(), pseudo))
}

/// Adds an EKF-style factor for a nonlinear model `h` with Jacobian `jac` at `x_hat`.
#[allow(clippy::too_many_arguments)]
pub fn add_linearized_measurement(
    g: &mut FactorGraph,
    vars: &[VariableKey],
    h: impl Fn(&DVector<f64>) -> DVector<f64>,
    jac: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
    x_hat: &DVector<f64>,
    angle_rows: &[usize],
) -> Result<()> {
    let lin = Linearization {
        predicted: h(x_hat),
        jacobian: jac.clone(),
        x_hat,
        angle_rows,
    };
    g.add_factor(linearized_measurement_factor(vars, &lin, r, y)?)?;
    Ok(())
}

/// Marginalizes out every variable in `past`.
pub fn roll_up(g: &mut FactorGraph, past: &[VariableKey]) -> Result<()> {
    g.eliminate_variables(past)
}

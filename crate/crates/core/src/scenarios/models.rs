//! Motion and sensor models used by the scenarios.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::filtering::wrap_angle;

/// Nearly-constant-velocity transition for `[n, ṅ, e, ė]`.
pub fn ncv_transition(dt: f64) -> DMatrix<f64> {
    let mut f = DMatrix::identity(4, 4);
    f[(0, 1)] = dt;
    f[(2, 3)] = dt;
    f
}

/// Acceleration input matrix of the NCV model.
pub fn ncv_input(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 2, &[0.5 * dt * dt, 0.0, dt, 0.0, 0.0, 0.5 * dt * dt, 0.0, dt])
}

/// Selects the position `[n, e]` of an NCV state.
pub fn ncv_position_selector() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
}

/// Zero-mean Gaussian draw with covariance `cov`.
pub fn gaussian_noise<R: Rng + ?Sized>(cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = cov.nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    match cov.clone().cholesky() {
        Some(c) => c.l() * z,
        // allow singular (e.g. zero) noise
        None => {
            let eig = cov.clone().symmetric_eigen();
            let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sq) * z
        }
    }
}

/// `x' = F x + G u + w`, `w ~ N(0, Q)` with zero input.
pub fn step_ncv<R: Rng + ?Sized>(x: &DVector<f64>, dt: f64, q: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    ncv_transition(dt) * x + gaussian_noise(q, rng)
}

/// Noise-free Euler step of the car model for pose `[x, y, θ]`.
pub fn dubins_step(pose: &DVector<f64>, v: f64, phi: f64, wheelbase: f64, dt: f64) -> DVector<f64> {
    let th = pose[2];
    DVector::from_column_slice(&[
        pose[0] + dt * v * th.cos(),
        pose[1] + dt * v * th.sin(),
        pose[2] + dt * v / wheelbase * phi.tan(),
    ])
}

/// Jacobian of [`dubins_step`] with respect to the pose.
pub fn dubins_jacobian(pose: &DVector<f64>, v: f64, dt: f64) -> DMatrix<f64> {
    let th = pose[2];
    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -dt * v * th.sin(), 0.0, 1.0, dt * v * th.cos(), 0.0, 0.0, 1.0])
}

/// Euler step plus additive noise; the heading is wrapped to `(-π, π]`.
#[allow(clippy::too_many_arguments)]
pub fn step_dubins<R: Rng + ?Sized>(
    pose: &DVector<f64>,
    v: f64,
    phi: f64,
    wheelbase: f64,
    dt: f64,
    q: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mut next = dubins_step(pose, v, phi, wheelbase, dt) + gaussian_noise(q, rng);
    next[2] = wrap_angle(next[2]);
    next
}

/// Relative target measurement `y = pos(x_t) + s + v`.
pub fn measure_relative<R: Rng + ?Sized>(
    target: &DVector<f64>,
    bias: &DVector<f64>,
    r: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    ncv_position_selector() * target + bias + gaussian_noise(r, rng)
}

/// Known-landmark measurement `m = s + v`.
pub fn measure_landmark<R: Rng + ?Sized>(bias: &DVector<f64>, r: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    bias + gaussian_noise(r, rng)
}

/// Noise-free bearing (relative to heading) and range from `pose` to `point`.
/// `None` when the point coincides with the robot.
pub fn bearing_range(pose: &DVector<f64>, point: &Vector2<f64>) -> Option<Vector2<f64>> {
    let dx = point.x - pose[0];
    let dy = point.y - pose[1];
    let r = dx.hypot(dy);
    if r < 1e-9 {
        return None;
    }
    Some(Vector2::new(wrap_angle(dy.atan2(dx) - pose[2]), r))
}

/// Jacobian of [`bearing_range`] with respect to `[x, y, θ, x_t, y_t]`.
pub fn bearing_range_jacobian(pose: &DVector<f64>, point: &Vector2<f64>) -> DMatrix<f64> {
    let dx = point.x - pose[0];
    let dy = point.y - pose[1];
    let q = dx * dx + dy * dy;
    let r = q.sqrt();
    DMatrix::from_row_slice(
        2,
        5,
        &[dy / q, -dx / q, -1.0, -dy / q, dx / q, -dx / r, -dy / r, 0.0, dx / r, dy / r],
    )
}

/// Noisy bearing/range measurement, or `None` for a coincident point.
pub fn measure_bearing_range<R: Rng + ?Sized>(
    pose: &DVector<f64>,
    point: &Vector2<f64>,
    sigma_bearing: f64,
    sigma_range: f64,
    rng: &mut R,
) -> Option<Vector2<f64>> {
    let clean = bearing_range(pose, point)?;
    let r = Matrix2::new(sigma_bearing * sigma_bearing, 0.0, 0.0, sigma_range * sigma_range);
    let noise = gaussian_noise(&DMatrix::from_column_slice(2, 2, r.as_slice()), rng);
    Some(Vector2::new(wrap_angle(clean.x + noise[0]), clean.y + noise[1]))
}

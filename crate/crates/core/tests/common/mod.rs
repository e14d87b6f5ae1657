//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's Schur-complement or graph code; everything goes through dense
//! covariance-form linear algebra.
#![allow(dead_code)]

pub mod chains;

use fgddf::gaussian::{CanonicalFactor, VariableKey};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn key(name: &str, dim: usize) -> VariableKey {
    VariableKey::new(name, 0, dim)
}

/// `A Aᵀ + floor·I` with `A` standard normal-ish entries.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

/// Rank-deficient PSD block, as produced by a relative measurement.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Dense joint `(ζ, Λ)` over `vars` built by scattering each factor entry by
/// explicit index lookup.
pub fn dense_joint(vars: &[VariableKey], factors: &[CanonicalFactor]) -> (DVector<f64>, DMatrix<f64>) {
    let mut offset = std::collections::HashMap::new();
    let mut n = 0;
    for v in vars {
        offset.insert(v.clone(), n);
        n += v.dim();
    }
    let mut zeta = DVector::zeros(n);
    let mut lambda = DMatrix::zeros(n, n);
    for f in factors {
        let mut idx = Vec::new();
        for k in f.scope() {
            let o = offset[k];
            idx.extend(o..o + k.dim());
        }
        for (a, &i) in idx.iter().enumerate() {
            zeta[i] += f.zeta()[a];
            for (b, &j) in idx.iter().enumerate() {
                lambda[(i, j)] += f.lambda()[(a, b)];
            }
        }
    }
    (zeta, lambda)
}

/// Mean and covariance of a dense canonical pair by plain inversion.
pub fn moments(zeta: &DVector<f64>, lambda: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let cov = lambda.clone().try_inverse().expect("oracle joint is invertible");
    (&cov * zeta, cov)
}

/// Index ranges of `keep` inside the stacked `vars`.
pub fn indices(vars: &[VariableKey], keep: &[VariableKey]) -> Vec<usize> {
    let mut out = Vec::new();
    for k in keep {
        let mut o = 0;
        for v in vars {
            if v == k {
                out.extend(o..o + v.dim());
            }
            o += v.dim();
        }
    }
    out
}

/// Covariance-form marginal: invert, select, invert back.
pub fn covariance_marginal(
    zeta: &DVector<f64>,
    lambda: &DMatrix<f64>,
    idx: &[usize],
) -> (DVector<f64>, DMatrix<f64>) {
    let (mu, cov) = moments(zeta, lambda);
    let sub_cov = cov.select_rows(idx).select_columns(idx);
    let sub_mu = mu.select_rows(idx);
    let info = sub_cov.try_inverse().expect("marginal covariance is invertible");
    (&info * sub_mu, info)
}

/// Textbook covariance-form Kalman filter.
pub struct MomentKf {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl MomentKf {
    pub fn predict(&mut self, f: &DMatrix<f64>, gu: &DVector<f64>, q: &DMatrix<f64>) {
        self.x = f * &self.x + gu;
        self.p = f * &self.p * f.transpose() + q;
    }

    pub fn update(&mut self, h: &DMatrix<f64>, r: &DMatrix<f64>, y: &DVector<f64>) {
        let s = h * &self.p * h.transpose() + r;
        let k = &self.p * h.transpose() * s.try_inverse().unwrap();
        self.x = &self.x + &k * (y - h * &self.x);
        let i = DMatrix::identity(self.x.len(), self.x.len());
        let a = &i - &k * h;
        // Joseph form keeps P symmetric to round-off.
        self.p = &a * &self.p * a.transpose() + &k * r * k.transpose();
    }
}

/// Nearly-constant-velocity transition for state `(x, ẋ, y, ẏ)`.
pub fn ncv(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[1.0, dt, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, dt, 0.0, 0.0, 0.0, 1.0],
    )
}

/// Position selector for NCV states.
pub fn ncv_position() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
}

pub fn gaussian_draw(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let l = cov.clone().cholesky().expect("SPD covariance").l();
    let z = DVector::from_fn(cov.nrows(), |_, _| StandardNormal.sample(rng));
    l * z
}

/// A random connected-ish graph: every variable gets a weak PD prior and
/// `extra` random PSD couplings over 2 or 3 variables, so cycles are common.
/// Blocks have 1 to `max_block` dims and the total stays at or below `max_dim`.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    max_dim: usize,
    max_block: usize,
    extra: usize,
) -> (Vec<VariableKey>, Vec<CanonicalFactor>) {
    let mut vars = Vec::new();
    let mut total = 0;
    while total < max_dim {
        let d = rng.gen_range(1..=max_block).min(max_dim - total);
        vars.push(VariableKey::new(format!("v{:02}", vars.len()), 0, d));
        total += d;
        if vars.len() >= 2 && rng.gen_bool(0.15) {
            break;
        }
    }
    let mut factors = Vec::new();
    for v in &vars {
        let lam = random_spd(rng, v.dim(), 0.2) * 0.5;
        factors.push(CanonicalFactor::new(vec![v.clone()], random_vector(rng, v.dim()), lam).unwrap());
    }
    for _ in 0..extra {
        let arity = rng.gen_range(2..=3usize).min(vars.len());
        let mut scope: Vec<VariableKey> = Vec::new();
        while scope.len() < arity {
            let v = vars[rng.gen_range(0..vars.len())].clone();
            if !scope.contains(&v) {
                scope.push(v);
            }
        }
        let n: usize = scope.iter().map(VariableKey::dim).sum();
        let rank = rng.gen_range(1..=n);
        factors.push(CanonicalFactor::new(scope, random_vector(rng, n), random_psd(rng, n, rank)).unwrap());
    }
    (vars, factors)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};

/// Dense information filter over a set of named state blocks.
///
/// Serves as the centralized reference and as the ego filter of the
/// cooperative-localization baseline.
#[derive(Clone, Debug)]
pub struct InformationFilter {
    blocks: BTreeMap<String, Range<usize>>,
    zeta: DVector<f64>,
    lambda: DMatrix<f64>,
}

impl InformationFilter {
    /// Blocks are laid out in the given order, with zero initial information.
    pub fn new(states: &[(String, usize)]) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        let mut n = 0;
        for (name, dim) in states {
            if blocks.insert(name.clone(), n..n + dim).is_some() {
                return Err(Error::Config(format!("duplicate state {name}")));
            }
            n += dim;
        }
        Ok(InformationFilter {
            blocks,
            zeta: DVector::zeros(n),
            lambda: DMatrix::zeros(n, n),
        })
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn block(&self, name: &str) -> Result<Range<usize>> {
        self.blocks.get(name).cloned().ok_or_else(|| Error::Scope(format!("unknown state {name}")))
    }

    /// Global indices of the named blocks, concatenated.
    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for n in names {
            out.extend(self.block(n)?);
        }
        Ok(out)
    }

    pub fn information(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.zeta, &self.lambda)
    }

    /// Adds `{ζ, Λ}` on the given global indices.
    pub fn add_information(&mut self, idx: &[usize], zeta: &DVector<f64>, lambda: &DMatrix<f64>) {
        for (a, &i) in idx.iter().enumerate() {
            self.zeta[i] += zeta[a];
            for (b, &j) in idx.iter().enumerate() {
                self.lambda[(i, j)] += lambda[(a, b)];
            }
        }
    }

    /// Independent Gaussian prior on one block.
    pub fn set_prior(&mut self, name: &str, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
        let idx: Vec<usize> = self.block(name)?.collect();
        let info = spd_inverse(cov).ok_or_else(|| Error::NotPositiveDefinite(format!("prior of {name}")))?;
        let zeta = &info * mean;
        self.add_information(&idx, &zeta, &info);
        Ok(())
    }

    /// Moment form `(μ, Σ)`.
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let cov = spd_inverse(&self.lambda).ok_or_else(|| Error::NotPositiveDefinite("centralized information".into()))?;
        let mean = &cov * &self.zeta;
        Ok((mean, cov))
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(self.moments()?.0)
    }

    /// `x' = F x + c + w`, `w ~ N(0, Q)`, all in the global layout.
    pub fn predict(&mut self, f: &DMatrix<f64>, offset: &DVector<f64>, q: &DMatrix<f64>) -> Result<()> {
        let (mean, cov) = self.moments()?;
        let mut next_cov = f * cov * f.transpose() + q;
        symmetrize(&mut next_cov);
        let next_mean = f * mean + offset;
        let info = spd_inverse(&next_cov).ok_or_else(|| Error::NotPositiveDefinite("predicted covariance".into()))?;
        self.zeta = &info * next_mean;
        self.lambda = info;
        Ok(())
    }

    /// Linear update `y = H x[idx] + v` with `v ~ N(0, R)`.
    pub fn update(&mut self, idx: &[usize], h: &DMatrix<f64>, r: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        let r_inv = spd_inverse(r).ok_or_else(|| Error::NotPositiveDefinite("measurement noise".into()))?;
        let ht_rinv = h.transpose() * r_inv;
        let lambda = &ht_rinv * h;
        let zeta = ht_rinv * y;
        self.add_information(idx, &zeta, &lambda);
        Ok(())
    }
}

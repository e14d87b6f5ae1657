use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::key::{key_labels, scope_dim, scope_offsets, VariableKey};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SymmetricSolver};

/// Gaussian potential in information form `{zeta, lambda}` over an ordered scope.
///
/// The information matrix is symmetrized on construction but need not be positive
/// definite: prediction cross-factors and channel-filter differences are indefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalFactor {
    scope: Vec<VariableKey>,
    zeta: DVector<f64>,
    lambda: DMatrix<f64>,
}

impl CanonicalFactor {
    pub fn new(scope: Vec<VariableKey>, zeta: DVector<f64>, mut lambda: DMatrix<f64>) -> Result<Self> {
        let n = scope_dim(&scope);
        if zeta.len() != n || lambda.nrows() != n || lambda.ncols() != n {
            return Err(Error::Dimension(format!(
                "scope of dim {n} with zeta {} and lambda {}x{}",
                zeta.len(),
                lambda.nrows(),
                lambda.ncols()
            )));
        }
        for (i, k) in scope.iter().enumerate() {
            if scope[..i].contains(k) {
                return Err(Error::Scope(format!("duplicate variable {k} in scope")));
            }
        }
        if zeta.iter().chain(lambda.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite entries in factor".into()));
        }
        symmetrize(&mut lambda);
        Ok(CanonicalFactor {
            scope,
            zeta,
            lambda,
        })
    }

    /// Factor with all-zero statistics over `scope`.
    pub fn zero(scope: Vec<VariableKey>) -> Self {
        let n = scope_dim(&scope);
        CanonicalFactor {
            scope,
            zeta: DVector::zeros(n),
            lambda: DMatrix::zeros(n, n),
        }
    }

    /// Factor over no variables; the identity for sums and differences.
    pub fn empty() -> Self {
        CanonicalFactor::zero(Vec::new())
    }

    pub fn scope(&self) -> &[VariableKey] {
        &self.scope
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scope.is_empty()
    }

    pub fn into_parts(self) -> (Vec<VariableKey>, DVector<f64>, DMatrix<f64>) {
        (self.scope, self.zeta, self.lambda)
    }

    pub fn contains(&self, key: &VariableKey) -> bool {
        self.scope.contains(key)
    }

    pub fn position(&self, key: &VariableKey) -> Option<usize> {
        self.scope.iter().position(|k| k == key)
    }

    /// Scalar indices of the given blocks, in the order given.
    fn indices_of(&self, keys: &[VariableKey]) -> Result<Vec<usize>> {
        let offsets = scope_offsets(&self.scope);
        let mut idx = Vec::with_capacity(scope_dim(keys));
        for k in keys {
            let p = self
                .position(k)
                .ok_or_else(|| Error::Scope(format!("{k} is not in the factor scope")))?;
            idx.extend(offsets[p]..offsets[p] + self.scope[p].dim());
        }
        Ok(idx)
    }

    /// Sub-vector and sub-matrix for the given blocks (in the order given).
    pub fn block(&self, keys: &[VariableKey]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let idx = self.indices_of(keys)?;
        Ok((self.zeta.select_rows(&idx), self.lambda.select_rows(&idx).select_columns(&idx)))
    }

    /// Embeds this factor into `target`, zero-padding the blocks it does not touch.
    pub fn align_scope(&self, target: &[VariableKey]) -> Result<CanonicalFactor> {
        if self.scope.as_slice() == target && self.scope.iter().zip(target).all(|(a, b)| a.dim() == b.dim()) {
            return Ok(self.clone());
        }
        let target_offsets = scope_offsets(target);
        let mut map = Vec::with_capacity(self.dim());
        for k in &self.scope {
            let p = target.iter().position(|t| t == k).ok_or_else(|| {
                Error::Scope(format!("{k} missing from target scope {:?}", key_labels(target)))
            })?;
            if target[p].dim() != k.dim() {
                return Err(Error::DimConflict {
                    key: k.to_string(),
                    existing: target[p].dim(),
                    requested: k.dim(),
                });
            }
            map.extend(target_offsets[p]..target_offsets[p] + k.dim());
        }
        let n = scope_dim(target);
        let mut zeta = DVector::zeros(n);
        let mut lambda = DMatrix::zeros(n, n);
        scatter_add(&mut zeta, &mut lambda, &map, &self.zeta, &self.lambda, 1.0);
        Ok(CanonicalFactor {
            scope: target.to_vec(),
            zeta,
            lambda,
        })
    }

    /// Same factor with its blocks sorted into canonical `(name, timestep)` order.
    pub fn canonical(&self) -> CanonicalFactor {
        let mut sorted = self.scope.clone();
        sorted.sort();
        self.align_scope(&sorted).expect("permutation of own scope")
    }

    /// Adds `other` into `self`; `other.scope` must be contained in `self.scope`.
    pub fn accumulate(&mut self, other: &CanonicalFactor, weight: f64) -> Result<()> {
        let map = self.scatter_map(other)?;
        scatter_add(&mut self.zeta, &mut self.lambda, &map, &other.zeta, &other.lambda, weight);
        Ok(())
    }

    fn scatter_map(&self, other: &CanonicalFactor) -> Result<Vec<usize>> {
        let offsets = scope_offsets(&self.scope);
        let mut map = Vec::with_capacity(other.dim());
        for k in &other.scope {
            let p = self
                .position(k)
                .ok_or_else(|| Error::Scope(format!("{k} is not in the factor scope")))?;
            if self.scope[p].dim() != k.dim() {
                return Err(Error::DimConflict {
                    key: k.to_string(),
                    existing: self.scope[p].dim(),
                    requested: k.dim(),
                });
            }
            map.extend(offsets[p]..offsets[p] + k.dim());
        }
        Ok(map)
    }

    /// `self - other` with `other.scope ⊆ self.scope`.
    pub fn diff(&self, other: &CanonicalFactor) -> Result<CanonicalFactor> {
        let mut out = self.clone();
        out.accumulate(other, -1.0)?;
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> CanonicalFactor {
        CanonicalFactor {
            scope: self.scope.clone(),
            zeta: &self.zeta * s,
            lambda: &self.lambda * s,
        }
    }

    /// Schur-complement marginal onto `keep`, ordered as in `self.scope`.
    pub fn marginalize(&self, keep: &[VariableKey]) -> Result<CanonicalFactor> {
        for k in keep {
            if !self.contains(k) {
                return Err(Error::Scope(format!("cannot keep {k}: not in factor scope")));
            }
        }
        let (kept, eliminated): (Vec<VariableKey>, Vec<VariableKey>) =
            self.scope.iter().cloned().partition(|k| keep.contains(k));
        if eliminated.is_empty() {
            return Ok(self.clone());
        }
        let ki = self.indices_of(&kept)?;
        let ei = self.indices_of(&eliminated)?;
        let l_ee = self.lambda.select_rows(&ei).select_columns(&ei);
        let solver = SymmetricSolver::new(&l_ee).map_err(|condition| Error::Elimination {
            keys: key_labels(&eliminated),
            condition,
        })?;
        if kept.is_empty() {
            return Ok(CanonicalFactor::empty());
        }
        let l_ek = self.lambda.select_rows(&ei).select_columns(&ki);
        let mut rhs = DMatrix::zeros(ei.len(), ki.len() + 1);
        rhs.columns_mut(0, ki.len()).copy_from(&l_ek);
        rhs.column_mut(ki.len()).copy_from(&self.zeta.select_rows(&ei));
        let sol = solver.solve(&rhs);
        let l_ke = l_ek.transpose();
        let corr = &l_ke * sol;
        let mut lambda = self.lambda.select_rows(&ki).select_columns(&ki);
        lambda -= corr.columns(0, ki.len());
        let zeta = self.zeta.select_rows(&ki) - corr.column(ki.len());
        CanonicalFactor::new(kept, zeta, lambda)
    }

    /// Conditional potential of `head` given the rest of the scope:
    /// `self ⊖ marginalize(self, scope \ head)`.
    pub fn conditional(&self, head: &[VariableKey]) -> Result<CanonicalFactor> {
        for k in head {
            if !self.contains(k) {
                return Err(Error::Scope(format!("conditional head {k} not in scope")));
            }
        }
        let rest: Vec<VariableKey> = self.scope.iter().filter(|k| !head.contains(k)).cloned().collect();
        let marginal = self.marginalize(&rest)?;
        self.diff(&marginal)
    }

    /// Largest absolute entry of zeta and lambda.
    pub fn max_abs(&self) -> f64 {
        self.zeta
            .iter()
            .chain(self.lambda.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn scatter_add(
    zeta: &mut DVector<f64>,
    lambda: &mut DMatrix<f64>,
    map: &[usize],
    src_zeta: &DVector<f64>,
    src_lambda: &DMatrix<f64>,
    weight: f64,
) {
    for (a, &ia) in map.iter().enumerate() {
        zeta[ia] += weight * src_zeta[a];
        for (b, &ib) in map.iter().enumerate() {
            lambda[(ia, ib)] += weight * src_lambda[(a, b)];
        }
    }
}

/// Union of scopes in canonical order, checking block dimensions agree.
pub fn union_scope<'a>(factors: impl IntoIterator<Item = &'a CanonicalFactor>) -> Result<Vec<VariableKey>> {
    let mut seen: BTreeMap<VariableKey, usize> = BTreeMap::new();
    for f in factors {
        for k in f.scope() {
            match seen.get(k) {
                Some(&d) if d != k.dim() => {
                    return Err(Error::DimConflict {
                        key: k.to_string(),
                        existing: d,
                        requested: k.dim(),
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert(k.clone(), k.dim());
                }
            }
        }
    }
    Ok(seen.into_keys().collect())
}

/// Direct sum of potentials over the union of their scopes (canonical order).
pub fn factor_sum<'a, I>(factors: I) -> Result<CanonicalFactor>
where
    I: IntoIterator<Item = &'a CanonicalFactor>,
    I::IntoIter: Clone,
{
    let iter = factors.into_iter();
    if iter.clone().next().is_none() {
        return Err(Error::Scope("factor sum over an empty list".into()));
    }
    let scope = union_scope(iter.clone())?;
    factor_sum_over(iter, scope)
}

/// Direct sum of potentials aligned to an explicit target scope.
pub fn factor_sum_over<'a>(
    factors: impl IntoIterator<Item = &'a CanonicalFactor>,
    scope: Vec<VariableKey>,
) -> Result<CanonicalFactor> {
    let mut acc = CanonicalFactor::zero(scope);
    for f in factors {
        acc.accumulate(f, 1.0)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: &str, d: usize) -> VariableKey {
        VariableKey::new(n, 0, d)
    }

    fn scalar_factor(keys: &[&str], zeta: &[f64], lambda: &[f64]) -> CanonicalFactor {
        let n = keys.len();
        CanonicalFactor::new(
            keys.iter().map(|k| key(k, 1)).collect(),
            DVector::from_column_slice(zeta),
            DMatrix::from_row_slice(n, n, lambda),
        )
        .unwrap()
    }

    #[test]
    fn align_pads_with_zeros() {
        let f = scalar_factor(&["a"], &[2.0], &[3.0]);
        let g = f.align_scope(&[key("a", 1), key("b", 1)]).unwrap();
        assert_eq!(g.zeta().as_slice(), &[2.0, 0.0]);
        assert_eq!(g.lambda(), &DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn align_permutes_blocks() {
        let f = scalar_factor(&["b", "a"], &[1.0, 2.0], &[4.0, 0.5, 0.5, 3.0]);
        let g = f.align_scope(&[key("a", 1), key("b", 1)]).unwrap();
        assert_eq!(g.zeta().as_slice(), &[2.0, 1.0]);
        assert_eq!(g.lambda(), &DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 4.0]));
    }

    #[test]
    fn align_rejects_missing_variable() {
        let f = scalar_factor(&["a"], &[1.0], &[1.0]);
        assert!(matches!(f.align_scope(&[key("b", 1)]), Err(Error::Scope(_))));
    }

    #[test]
    fn align_matches_naive_index_embedding() {
        // Oracle: place each scalar entry by explicit index lookup.
        let a = key("a", 2);
        let b = key("b", 2);
        let c = key("c", 3);
        let zeta = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let lambda = DMatrix::from_fn(4, 4, |i, j| (1 + i + j) as f64 + if i == j { 10.0 } else { 0.0 });
        let f = CanonicalFactor::new(vec![a.clone(), b.clone()], zeta.clone(), lambda.clone()).unwrap();
        let target = vec![a, c, b];
        let g = f.align_scope(&target).unwrap();
        // a -> 0..2, c -> 2..5, b -> 5..7
        let idx = [0usize, 1, 5, 6];
        let mut z = vec![0.0; 7];
        let mut l = vec![vec![0.0; 7]; 7];
        for i in 0..4 {
            z[idx[i]] = zeta[i];
            for j in 0..4 {
                l[idx[i]][idx[j]] = lambda[(i, j)];
            }
        }
        for i in 0..7 {
            assert_eq!(g.zeta()[i], z[i]);
            for j in 0..7 {
                assert_eq!(g.lambda()[(i, j)], l[i][j]);
            }
        }
    }

    #[test]
    fn sum_with_zero_is_identity() {
        let f = scalar_factor(&["a", "b"], &[1.0, -1.0], &[2.0, 0.3, 0.3, 1.0]);
        let z = CanonicalFactor::zero(f.scope().to_vec());
        assert_eq!(factor_sum([&f, &z]).unwrap(), f);
    }

    #[test]
    fn sum_rejects_dim_conflict() {
        let f = CanonicalFactor::zero(vec![key("a", 1)]);
        let g = CanonicalFactor::zero(vec![key("a", 2)]);
        assert!(matches!(factor_sum([&f, &g]), Err(Error::DimConflict { .. })));
    }

    #[test]
    fn sum_of_nothing_is_an_error() {
        assert!(factor_sum(std::iter::empty::<&CanonicalFactor>()).is_err());
    }

    #[test]
    fn prediction_triple_plus_prior_gives_joint_information() {
        // F = 2, Q = 1, Gu = 0 over scalar states x0, x1 with prior information 3.
        let x0 = VariableKey::new("x", 0, 1);
        let x1 = VariableKey::new("x", 1, 1);
        let prior = CanonicalFactor::new(vec![x0.clone()], DVector::zeros(1), DMatrix::from_element(1, 1, 3.0)).unwrap();
        let f_k = CanonicalFactor::new(vec![x0.clone()], DVector::zeros(1), DMatrix::from_element(1, 1, 4.0)).unwrap();
        let f_k1 = CanonicalFactor::new(vec![x1.clone()], DVector::zeros(1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let cross = CanonicalFactor::new(
            vec![x0, x1],
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[0.0, -2.0, -2.0, 0.0]),
        )
        .unwrap();
        let joint = factor_sum([&prior, &f_k, &f_k1, &cross]).unwrap();
        assert_eq!(joint.lambda(), &DMatrix::from_row_slice(2, 2, &[7.0, -2.0, -2.0, 1.0]));
    }

    #[test]
    fn diff_inverts_sum() {
        let a = scalar_factor(&["a", "b"], &[1.0, 2.0], &[3.0, 0.1, 0.1, 2.0]);
        let b = scalar_factor(&["b"], &[0.7], &[0.9]);
        let s = factor_sum([&a, &b]).unwrap();
        let back = s.diff(&b).unwrap();
        assert!((back.zeta() - a.zeta()).norm() <= 1e-12 * a.zeta().norm());
        assert!((back.lambda() - a.lambda()).norm() <= 1e-12 * a.lambda().norm());
        assert!(a.diff(&a).unwrap().max_abs() == 0.0);
        assert_eq!(a.diff(&CanonicalFactor::empty()).unwrap(), a);
    }

    #[test]
    fn marginal_of_two_by_two() {
        let f = scalar_factor(&["a", "b"], &[1.0, 1.0], &[2.0, 1.0, 1.0, 2.0]);
        let m = f.marginalize(&[key("b", 1)]).unwrap();
        assert!((m.lambda()[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((m.zeta()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn marginal_of_block_diagonal_keeps_block() {
        let f = scalar_factor(&["a", "b"], &[1.0, 3.0], &[2.0, 0.0, 0.0, 5.0]);
        let m = f.marginalize(&[key("a", 1)]).unwrap();
        assert_eq!(m.lambda()[(0, 0)], 2.0);
        assert_eq!(m.zeta()[0], 1.0);
    }

    #[test]
    fn singular_elimination_reports_keys() {
        let f = scalar_factor(&["a", "b"], &[0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        match f.marginalize(&[key("a", 1)]) {
            Err(Error::Elimination { keys, .. }) => assert_eq!(keys, vec!["b@0".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conditional_reconstructs_joint() {
        let f = scalar_factor(&["a", "b"], &[1.0, 1.0], &[2.0, 1.0, 1.0, 2.0]);
        let cond = f.conditional(&[key("a", 1)]).unwrap();
        let marg = f.marginalize(&[key("b", 1)]).unwrap();
        let back = factor_sum([&cond, &marg]).unwrap();
        assert!((back.lambda() - f.lambda()).norm() < 1e-12);
        assert!((back.zeta() - f.zeta()).norm() < 1e-12);
        // full-scope head leaves the joint untouched
        let all = f.conditional(f.scope()).unwrap();
        assert_eq!(all, f);
    }

    #[test]
    fn conditional_of_independent_blocks_is_marginal() {
        let f = scalar_factor(&["a", "b"], &[1.0, 3.0], &[2.0, 0.0, 0.0, 5.0]);
        let cond = f.conditional(&[key("a", 1)]).unwrap();
        let marginal_a = f.marginalize(&[key("a", 1)]).unwrap();
        let expected = marginal_a.align_scope(f.scope()).unwrap();
        assert_eq!(cond, expected);
    }
}

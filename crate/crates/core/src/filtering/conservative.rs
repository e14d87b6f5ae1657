use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use super::roll_up;
use crate::error::{Error, Result};
use crate::gaussian::{factor_sum_over, CanonicalFactor, VariableKey};
use crate::graph::{FactorGraph, FactorId};
use crate::linalg::{inverse_sqrt, is_positive_definite, min_eigenvalue};

/// Target factorization for sparsifying a dense local joint.
///
/// The joint is replaced by the product of the marginals of the detached blocks,
/// the marginal of the first head, and one conditional `p(head | given)` per
/// further entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityPattern {
    detached: Vec<Vec<VariableKey>>,
    entries: Vec<(Vec<VariableKey>, Vec<VariableKey>)>,
}

impl SparsityPattern {
    pub fn new(detached: Vec<Vec<VariableKey>>, entries: Vec<(Vec<VariableKey>, Vec<VariableKey>)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for k in detached.iter().flatten().chain(entries.iter().flat_map(|(h, _)| h)) {
            if !seen.insert(k.clone()) {
                return Err(Error::Scope(format!("{k} appears in two blocks of the sparsity pattern")));
            }
        }
        for (head, given) in &entries {
            if head.is_empty() {
                return Err(Error::Scope("sparsity pattern head is empty".into()));
            }
            if let Some(k) = given.iter().find(|k| head.contains(k)) {
                return Err(Error::Scope(format!("{k} is both head and condition")));
            }
        }
        Ok(SparsityPattern { detached, entries })
    }

    /// One block holding everything: sparsification is a no-op.
    pub fn identity(vars: &[VariableKey]) -> Self {
        SparsityPattern {
            detached: if vars.is_empty() { Vec::new() } else { vec![vars.to_vec()] },
            entries: Vec::new(),
        }
    }

    /// Pattern for a robot whose variables `vars` overlap its neighbors on
    /// `common_sets`.
    ///
    /// Local variables form one detached block. Common variables are grouped by
    /// which neighbors share them; the group shared with every neighbor comes
    /// first and each remaining group is conditioned on it.
    pub fn from_common_sets(vars: &[VariableKey], common_sets: &[Vec<VariableKey>]) -> Self {
        if common_sets.is_empty() {
            return Self::identity(vars);
        }
        let mut local = Vec::new();
        let mut groups: BTreeMap<Vec<bool>, Vec<VariableKey>> = BTreeMap::new();
        for v in vars {
            let signature: Vec<bool> = common_sets.iter().map(|s| s.contains(v)).collect();
            if signature.iter().any(|&b| b) {
                groups.entry(signature).or_default().push(v.clone());
            } else {
                local.push(v.clone());
            }
        }
        let all = vec![true; common_sets.len()];
        let shared = groups.remove(&all).unwrap_or_default();
        let mut entries = Vec::new();
        if !shared.is_empty() {
            entries.push((shared.clone(), Vec::new()));
        }
        // most widely shared groups first
        let mut rest: Vec<(Vec<bool>, Vec<VariableKey>)> = groups.into_iter().collect();
        rest.sort_by_key(|(sig, _)| std::cmp::Reverse(sig.iter().filter(|b| **b).count()));
        for (_, g) in rest {
            entries.push((g, shared.clone()));
        }
        SparsityPattern {
            detached: if local.is_empty() { Vec::new() } else { vec![local] },
            entries,
        }
    }

    pub fn detached(&self) -> &[Vec<VariableKey>] {
        &self.detached
    }

    pub fn entries(&self) -> &[(Vec<VariableKey>, Vec<VariableKey>)] {
        &self.entries
    }

    /// Checks that the blocks cover exactly `vars` and conditions refer to earlier heads.
    pub fn validate(&self, vars: &[VariableKey]) -> Result<()> {
        let covered: BTreeSet<&VariableKey> =
            self.detached.iter().flatten().chain(self.entries.iter().flat_map(|(h, _)| h)).collect();
        let wanted: BTreeSet<&VariableKey> = vars.iter().collect();
        if covered != wanted {
            let missing: Vec<String> = wanted.difference(&covered).map(|k| k.to_string()).collect();
            let extra: Vec<String> = covered.difference(&wanted).map(|k| k.to_string()).collect();
            return Err(Error::Scope(format!(
                "sparsity pattern mismatch: missing {missing:?}, unknown {extra:?}"
            )));
        }
        Ok(())
    }
}

/// Replaces every factor coupling `local` variables with the rest of the graph by
/// two factors, one per side, so that both sides keep their exact marginals but
/// become independent.
pub fn decouple_hidden(g: &mut FactorGraph, local: &[VariableKey]) -> Result<()> {
    let is_local = |k: &VariableKey| local.contains(k);
    let mut coupling: Vec<FactorId> = Vec::new();
    let mut a_internal: Vec<FactorId> = Vec::new();
    let mut b_internal: Vec<FactorId> = Vec::new();
    for (id, f) in g.factors() {
        let n_local = f.scope().iter().filter(|k| is_local(k)).count();
        if n_local == 0 {
            b_internal.push(id);
        } else if n_local == f.scope().len() {
            a_internal.push(id);
        } else {
            coupling.push(id);
        }
    }
    if coupling.is_empty() {
        return Ok(());
    }
    let (a_vars, b_vars): (Vec<VariableKey>, Vec<VariableKey>) = g.variables().cloned().partition(|k| is_local(k));
    let touched = |side: &dyn Fn(&VariableKey) -> bool| -> BTreeSet<VariableKey> {
        coupling
            .iter()
            .flat_map(|id| g.factor(*id).unwrap().scope().iter())
            .filter(|k| side(k))
            .cloned()
            .collect()
    };
    let a_touched: Vec<VariableKey> = touched(&|k| is_local(k)).into_iter().collect();
    let b_touched: Vec<VariableKey> = touched(&|k| !is_local(k)).into_iter().collect();

    let side_factor = |others: &[FactorId], other_vars: &[VariableKey], keep: &[VariableKey]| {
        let mut scope: Vec<VariableKey> = other_vars.iter().chain(keep).cloned().collect();
        scope.sort();
        let ids = coupling.iter().chain(others);
        let sum = factor_sum_over(ids.map(|id| g.factor(*id).unwrap()), scope)?;
        sum.marginalize(keep)
    };
    let f_a = side_factor(&b_internal, &b_vars, &a_touched)?;
    let f_b = side_factor(&a_internal, &a_vars, &b_touched)?;
    debug_assert!(a_vars.iter().all(|k| !b_touched.contains(k)));
    for id in coupling {
        g.remove_factor(id);
    }
    g.add_factor(f_a)?;
    g.add_factor(f_b)?;
    Ok(())
}

/// Rebuilds the graph's factors from its dense joint following `pattern`.
pub fn regain_conditional_independence(g: &mut FactorGraph, pattern: &SparsityPattern) -> Result<()> {
    let vars = g.variable_keys();
    pattern.validate(&vars)?;
    let joint = g.joint_factor()?;
    let mut factors: Vec<CanonicalFactor> = Vec::new();
    for block in pattern.detached() {
        factors.push(joint.marginalize(block)?);
    }
    for (head, given) in pattern.entries() {
        if given.is_empty() {
            factors.push(joint.marginalize(head)?);
        } else {
            let keep: Vec<VariableKey> = head.iter().chain(given).cloned().collect();
            factors.push(joint.marginalize(&keep)?.conditional(head)?);
        }
    }
    g.replace_factors(factors)
}

/// Largest `λ ≤ 1` with `Λ_de − λΛ_sp ⪰ 0`.
pub fn deflation_constant(lambda_sp: &DMatrix<f64>, lambda_de: &DMatrix<f64>) -> Result<f64> {
    if lambda_sp.shape() != lambda_de.shape() {
        return Err(Error::Dimension(format!(
            "deflation of {:?} against {:?}",
            lambda_sp.shape(),
            lambda_de.shape()
        )));
    }
    if !is_positive_definite(lambda_sp) || !is_positive_definite(lambda_de) {
        return Err(Error::NotPositiveDefinite("deflation inputs".into()));
    }
    if lambda_sp.nrows() == 0 {
        return Ok(1.0);
    }
    let s = inverse_sqrt(lambda_sp);
    let q = &s * lambda_de * &s;
    Ok(min_eigenvalue(&crate::linalg::symmetrized(q)).min(1.0))
}

/// Outcome of one conservative filtering step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservativeReport {
    pub lambda: f64,
    /// `min eig(Λ_de − λΛ_sp)`; non-negative up to round-off.
    pub psd_margin: f64,
}

/// Rolls up `past` while keeping the graph on `pattern`'s sparsity.
///
/// A dense copy of the graph is rolled up exactly. The working graph has its
/// hidden local/common couplings split, is rolled up, sparsified, and finally
/// rescaled so that its mean matches the dense mean and its information never
/// exceeds the dense information.
pub fn conservative_filter(
    g: &mut FactorGraph,
    past: &[VariableKey],
    local: &[VariableKey],
    pattern: impl FnOnce(&[VariableKey]) -> SparsityPattern,
) -> Result<ConservativeReport> {
    let mut dense = g.clone();
    decouple_hidden(g, local)?;
    roll_up(g, past)?;
    roll_up(&mut dense, past)?;
    let vars = g.variable_keys();
    regain_conditional_independence(g, &pattern(&vars))?;

    let de = dense.joint_density()?;
    let mu_de = de.mean();
    let sp = g.joint_factor()?;
    let lambda = deflation_constant(sp.lambda(), de.lambda())?;
    let psd_margin = min_eigenvalue(&(de.lambda() - sp.lambda() * lambda));

    let offsets = crate::gaussian::scope_offsets(&vars);
    g.map_factors(|f| {
        let mut idx = Vec::with_capacity(f.dim());
        for k in f.scope() {
            let p = vars.binary_search(k).expect("factor variables are graph variables");
            idx.extend(offsets[p]..offsets[p] + k.dim());
        }
        let lam = f.lambda() * lambda;
        let zeta = &lam * mu_de.select_rows(&idx);
        CanonicalFactor::new(f.scope().to_vec(), zeta, lam)
    })?;
    Ok(ConservativeReport { lambda, psd_margin })
}

/// Rolls up a channel-filter graph and applies the owner's deflation constant.
pub fn deflate_channel(cf: &mut FactorGraph, past: &[VariableKey], lambda: f64) -> Result<()> {
    let present: Vec<VariableKey> = past.iter().filter(|k| cf.contains(k)).cloned().collect();
    roll_up(cf, &present)?;
    if lambda != 1.0 {
        cf.map_factors(|f| Ok(f.scaled(lambda)))?;
    }
    Ok(())
}

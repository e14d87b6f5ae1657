//! Bipartite Gaussian factor graphs.
//!
//! Variables are [`VariableKey`] blocks and factors are [`CanonicalFactor`]s; an edge
//! is implied between a factor and every variable in its scope. Factor ids increase
//! monotonically so that iteration order, and therefore every floating-point sum, is
//! deterministic.

mod cliques;
mod dump;
mod inference;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::gaussian::{factor_sum_over, CanonicalDensity, CanonicalFactor, VariableKey};

pub use cliques::{Clique, CliqueGraph, CliqueLink};

pub type FactorId = u64;

#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    variables: BTreeSet<VariableKey>,
    factors: BTreeMap<FactorId, CanonicalFactor>,
    next_id: FactorId,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable; re-adding an existing key with the same dimension is a no-op.
    pub fn add_variable(&mut self, key: VariableKey) -> Result<()> {
        if let Some(existing) = self.variables.get(&key) {
            if existing.dim() != key.dim() {
                return Err(Error::DimConflict {
                    key: key.to_string(),
                    existing: existing.dim(),
                    requested: key.dim(),
                });
            }
            return Ok(());
        }
        self.variables.insert(key);
        Ok(())
    }

    /// Stores a factor under a fresh id, creating any variables it mentions.
    pub fn add_factor(&mut self, factor: CanonicalFactor) -> Result<FactorId> {
        if factor.is_empty() {
            return Err(Error::Scope("factors must touch at least one variable".into()));
        }
        for k in factor.scope() {
            if let Some(existing) = self.variables.get(k) {
                if existing.dim() != k.dim() {
                    return Err(Error::DimConflict {
                        key: k.to_string(),
                        existing: existing.dim(),
                        requested: k.dim(),
                    });
                }
            }
        }
        for k in factor.scope() {
            self.variables.insert(k.clone());
        }
        let id = self.next_id;
        self.next_id += 1;
        self.factors.insert(id, factor);
        Ok(id)
    }

    pub fn remove_factor(&mut self, id: FactorId) -> Option<CanonicalFactor> {
        self.factors.remove(&id)
    }

    /// Drops a variable that no factor touches.
    pub fn remove_isolated_variable(&mut self, key: &VariableKey) -> Result<()> {
        if self.factors.values().any(|f| f.contains(key)) {
            return Err(Error::Scope(format!("{key} is still connected to factors")));
        }
        self.variables.remove(key);
        Ok(())
    }

    pub fn variables(&self) -> impl Iterator<Item = &VariableKey> {
        self.variables.iter()
    }

    pub fn variable_keys(&self) -> Vec<VariableKey> {
        self.variables.iter().cloned().collect()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn contains(&self, key: &VariableKey) -> bool {
        self.variables.contains(key)
    }

    pub fn variable(&self, key: &VariableKey) -> Option<&VariableKey> {
        self.variables.get(key)
    }

    pub fn factors(&self) -> impl Iterator<Item = (FactorId, &CanonicalFactor)> {
        self.factors.iter().map(|(id, f)| (*id, f))
    }

    pub fn factor(&self, id: FactorId) -> Option<&CanonicalFactor> {
        self.factors.get(&id)
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// Ids of the factors whose scope contains `key`.
    pub fn adjacent_factors(&self, key: &VariableKey) -> Vec<FactorId> {
        self.factors
            .iter()
            .filter(|(_, f)| f.contains(key))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn degree(&self, key: &VariableKey) -> usize {
        self.factors.values().filter(|f| f.contains(key)).count()
    }

    /// Variables sharing a factor with `key`.
    pub fn markov_blanket(&self, key: &VariableKey) -> Vec<VariableKey> {
        let mut blanket = BTreeSet::new();
        for f in self.factors.values().filter(|f| f.contains(key)) {
            blanket.extend(f.scope().iter().filter(|k| *k != key).cloned());
        }
        blanket.into_iter().collect()
    }

    /// Removes `key` by summing its adjacent factors and replacing them with their
    /// Schur-complement marginal over the Markov blanket. Returns the id of the new
    /// factor, or `None` when the blanket is empty.
    pub fn eliminate_variable(&mut self, key: &VariableKey) -> Result<Option<FactorId>> {
        if !self.variables.contains(key) {
            return Err(Error::Scope(format!("{key} is not in the graph")));
        }
        let adjacent = self.adjacent_factors(key);
        let mut scope: Vec<VariableKey> = self.markov_blanket(key);
        scope.push(self.variables.get(key).cloned().expect("checked above"));
        scope.sort();
        let summed = factor_sum_over(adjacent.iter().map(|id| &self.factors[id]), scope.clone())?;
        let blanket: Vec<VariableKey> = scope.into_iter().filter(|k| k != key).collect();
        let marginal = summed.marginalize(&blanket)?;
        for id in &adjacent {
            self.factors.remove(id);
        }
        self.variables.remove(key);
        if marginal.is_empty() {
            Ok(None)
        } else {
            self.add_factor(marginal).map(Some)
        }
    }

    pub fn eliminate_variables(&mut self, keys: &[VariableKey]) -> Result<()> {
        for k in keys {
            self.eliminate_variable(k)?;
        }
        Ok(())
    }

    /// Direct sum of every factor over all variables, in canonical order.
    pub fn joint_factor(&self) -> Result<CanonicalFactor> {
        factor_sum_over(self.factors.values(), self.variable_keys())
    }

    /// The joint as a density; fails when the graph is not anchored (not PD).
    pub fn joint_density(&self) -> Result<CanonicalDensity> {
        CanonicalDensity::new(self.joint_factor()?)
    }

    /// Marginal potential over `keep`, computed densely from the joint.
    pub fn marginal_factor(&self, keep: &[VariableKey]) -> Result<CanonicalFactor> {
        self.joint_factor()?.marginalize(keep)
    }

    /// Replaces every factor while keeping the variable set.
    pub fn replace_factors(&mut self, factors: impl IntoIterator<Item = CanonicalFactor>) -> Result<()> {
        self.factors.clear();
        for f in factors {
            self.add_factor(f)?;
        }
        Ok(())
    }

    /// Applies `map` to every factor in place, keeping ids.
    pub fn map_factors(&mut self, mut map: impl FnMut(&CanonicalFactor) -> Result<CanonicalFactor>) -> Result<()> {
        for f in self.factors.values_mut() {
            *f = map(f)?;
        }
        Ok(())
    }

    /// Variables no factor touches.
    pub fn orphans(&self) -> Vec<VariableKey> {
        self.variables
            .iter()
            .filter(|k| !self.factors.values().any(|f| f.contains(k)))
            .cloned()
            .collect()
    }

    pub fn form_cliques(&self) -> CliqueGraph {
        cliques::form_cliques(self)
    }

    pub fn infer_marginals(&self) -> Result<BTreeMap<VariableKey, crate::gaussian::MomentGaussian>> {
        inference::infer_marginals(self)
    }

    pub fn dump(&self) -> String {
        dump::dump(self)
    }
}

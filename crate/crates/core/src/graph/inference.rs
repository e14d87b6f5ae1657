use std::collections::{BTreeMap, HashMap};

use super::{CliqueGraph, FactorGraph};
use crate::error::{Error, Result};
use crate::gaussian::{factor_sum_over, CanonicalDensity, CanonicalFactor, MomentGaussian, VariableKey};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    ToLink { clique: usize, link: usize },
    ToClique { link: usize, clique: usize },
}

struct Messages<'a> {
    tree: &'a CliqueGraph,
    seps: Vec<Vec<(usize, Vec<VariableKey>)>>,
    memo: HashMap<Edge, CanonicalFactor>,
}

impl Messages<'_> {
    fn sep(&self, link: usize, clique: usize) -> &[VariableKey] {
        &self.seps[link].iter().find(|(c, _)| *c == clique).expect("clique on link").1
    }

    fn get(&mut self, edge: Edge) -> Result<CanonicalFactor> {
        if let Some(m) = self.memo.get(&edge) {
            return Ok(m.clone());
        }
        let msg = match edge {
            Edge::ToLink { clique, link } => {
                let c = &self.tree.cliques[clique];
                let mut parts = vec![c.potential.clone()];
                for other in self.tree.neighbors_of_clique(clique) {
                    if other != link {
                        parts.push(self.get(Edge::ToClique { link: other, clique })?);
                    }
                }
                let belief = factor_sum_over(&parts, c.variables.clone())?;
                belief.marginalize(self.sep(link, clique))?
            }
            Edge::ToClique { link, clique } => {
                let l = &self.tree.links[link];
                let mut parts = vec![l.potential.clone()];
                for &other in &l.cliques {
                    if other != clique {
                        parts.push(self.get(Edge::ToLink { clique: other, link })?);
                    }
                }
                let belief = factor_sum_over(&parts, l.potential.scope().to_vec())?;
                belief.marginalize(self.sep(link, clique))?
            }
        };
        self.memo.insert(edge, msg.clone());
        Ok(msg)
    }
}

fn tree_marginals(g: &FactorGraph) -> Result<BTreeMap<VariableKey, MomentGaussian>> {
    let tree = g.form_cliques();
    let seps = tree.separators();
    let mut msgs = Messages {
        tree: &tree,
        seps,
        memo: HashMap::new(),
    };
    let mut out = BTreeMap::new();
    for (ci, c) in tree.cliques.iter().enumerate() {
        let mut parts = vec![c.potential.clone()];
        for l in tree.neighbors_of_clique(ci) {
            parts.push(msgs.get(Edge::ToClique { link: l, clique: ci })?);
        }
        let belief = factor_sum_over(&parts, c.variables.clone())?;
        for v in &c.variables {
            let m = CanonicalDensity::new(belief.marginalize(std::slice::from_ref(v))?)?;
            out.insert(v.clone(), m.to_moments());
        }
    }
    Ok(out)
}

fn dense_marginals(g: &FactorGraph) -> Result<BTreeMap<VariableKey, MomentGaussian>> {
    let joint = g.joint_density()?.to_moments();
    g.variables()
        .map(|k| Ok((k.clone(), joint.select(std::slice::from_ref(k))?)))
        .collect()
}

/// Per-variable marginals by sum-product on the clique tree.
///
/// A message can hit a block with no information of its own (an unobserved leaf);
/// in that case the marginals are taken from the dense joint instead.
pub(crate) fn infer_marginals(g: &FactorGraph) -> Result<BTreeMap<VariableKey, MomentGaussian>> {
    match tree_marginals(g) {
        Err(Error::Elimination { .. }) | Err(Error::NotPositiveDefinite(_)) => dense_marginals(g),
        other => other,
    }
}

use std::collections::BTreeMap;

use super::{FactorGraph, FactorId};
use crate::gaussian::{factor_sum_over, union_scope, CanonicalFactor, VariableKey};

/// A super-node grouping variables that sit on cycles of the factor graph.
#[derive(Clone, Debug)]
pub struct Clique {
    pub variables: Vec<VariableKey>,
    /// Sum of the original factors whose scope lies inside this clique.
    pub potential: CanonicalFactor,
    pub factor_ids: Vec<FactorId>,
}

/// Merged factor node connecting two or more cliques.
#[derive(Clone, Debug)]
pub struct CliqueLink {
    pub cliques: Vec<usize>,
    pub potential: CanonicalFactor,
    pub factor_ids: Vec<FactorId>,
}

/// Acyclic factor graph over cliques: cliques are variable nodes, links are
/// factor nodes.
#[derive(Clone, Debug, Default)]
pub struct CliqueGraph {
    pub cliques: Vec<Clique>,
    pub links: Vec<CliqueLink>,
}

impl CliqueGraph {
    /// Variables each link shares with each of its cliques.
    pub fn separators(&self) -> Vec<Vec<(usize, Vec<VariableKey>)>> {
        self.links
            .iter()
            .map(|l| {
                l.cliques
                    .iter()
                    .map(|&c| {
                        let shared = self.cliques[c]
                            .variables
                            .iter()
                            .filter(|v| l.potential.contains(v))
                            .cloned()
                            .collect();
                        (c, shared)
                    })
                    .collect()
            })
            .collect()
    }

    /// True when the clique/link bipartite graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let nc = self.cliques.len();
        let nodes = nc + self.links.len();
        let mut uf = UnionFind::new(nodes);
        for (li, l) in self.links.iter().enumerate() {
            for &c in &l.cliques {
                if !uf.union(c, nc + li) {
                    return false;
                }
            }
        }
        true
    }

    pub fn clique_of(&self, key: &VariableKey) -> Option<usize> {
        self.cliques.iter().position(|c| c.variables.contains(key))
    }

    pub fn neighbors_of_clique(&self, c: usize) -> Vec<usize> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.cliques.contains(&c))
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

struct Layout {
    /// Variable indices per clique, cliques ordered by smallest member.
    members: Vec<Vec<usize>>,
    absorbed: Vec<Vec<FactorId>>,
    links: Vec<(Vec<usize>, Vec<FactorId>)>,
}

fn layout(g: &FactorGraph, vars: &[VariableKey], uf: &mut UnionFind) -> Layout {
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..vars.len() {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    // roots are the smallest member, so BTreeMap order is "by smallest member"
    let members: Vec<Vec<usize>> = by_root.into_values().collect();
    let mut clique_of = vec![0usize; vars.len()];
    for (c, m) in members.iter().enumerate() {
        for &v in m {
            clique_of[v] = c;
        }
    }
    let mut absorbed = vec![Vec::new(); members.len()];
    let mut links: BTreeMap<Vec<usize>, Vec<FactorId>> = BTreeMap::new();
    for (id, f) in g.factors() {
        let mut set: Vec<usize> = f
            .scope()
            .iter()
            .map(|k| clique_of[vars.binary_search(k).expect("factor variables are graph variables")])
            .collect();
        set.sort_unstable();
        set.dedup();
        if set.len() == 1 {
            absorbed[set[0]].push(id);
        } else {
            links.entry(set).or_default().push(id);
        }
    }
    Layout {
        members,
        absorbed,
        links: links.into_iter().collect(),
    }
}

/// Clique indices along some cycle of the clique/link graph, if any.
fn find_cycle(nc: usize, links: &[(Vec<usize>, Vec<FactorId>)]) -> Option<Vec<usize>> {
    let n = nc + links.len();
    let mut adj = vec![Vec::new(); n];
    for (li, (cs, _)) in links.iter().enumerate() {
        for &c in cs {
            adj[c].push(nc + li);
            adj[nc + li].push(c);
        }
    }
    let mut visited = vec![false; n];
    let mut on_stack = vec![false; n];
    let mut parent = vec![usize::MAX; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        visited[start] = true;
        on_stack[start] = true;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let v = adj[u][*next];
                *next += 1;
                if v == parent[u] {
                    continue;
                }
                if on_stack[v] {
                    let mut cycle = vec![u];
                    let mut w = u;
                    while w != v {
                        w = parent[w];
                        cycle.push(w);
                    }
                    return Some(cycle.into_iter().filter(|&x| x < nc).collect());
                }
                if !visited[v] {
                    visited[v] = true;
                    on_stack[v] = true;
                    parent[v] = u;
                    stack.push((v, 0));
                }
            } else {
                on_stack[u] = false;
                stack.pop();
            }
        }
    }
    None
}

/// Merges variables on cycles into cliques until the graph is a tree.
///
/// Each pass finds one cycle and merges the two cliques on it with the most links
/// (ties go to the earlier clique). Factors that end up connecting the same set of
/// cliques are merged into a single link, so merging the hub of a loop resolves
/// every loop through it without growing the cliques further.
pub(crate) fn form_cliques(g: &FactorGraph) -> CliqueGraph {
    let vars = g.variable_keys();
    let mut uf = UnionFind::new(vars.len());
    let lay = loop {
        let lay = layout(g, &vars, &mut uf);
        let nc = lay.members.len();
        let Some(cycle) = find_cycle(nc, &lay.links) else {
            break lay;
        };
        let mut degree = vec![0usize; nc];
        for (cs, _) in &lay.links {
            for &c in cs {
                degree[c] += 1;
            }
        }
        let mut ranked = cycle;
        ranked.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
        let (a, b) = (lay.members[ranked[0]][0], lay.members[ranked[1]][0]);
        uf.union(a, b);
    };

    let cliques = lay
        .members
        .iter()
        .zip(&lay.absorbed)
        .map(|(m, ids)| {
            let variables: Vec<VariableKey> = m.iter().map(|&i| vars[i].clone()).collect();
            let potential = factor_sum_over(ids.iter().map(|id| g.factor(*id).unwrap()), variables.clone())
                .expect("absorbed factors lie inside the clique");
            Clique {
                variables,
                potential,
                factor_ids: ids.clone(),
            }
        })
        .collect();
    let links = lay
        .links
        .into_iter()
        .map(|(cs, ids)| {
            let fs: Vec<&CanonicalFactor> = ids.iter().map(|id| g.factor(*id).unwrap()).collect();
            let scope = union_scope(fs.iter().copied()).expect("graph factors agree on dims");
            let potential = factor_sum_over(fs, scope).expect("scope is the union");
            CliqueLink {
                cliques: cs,
                potential,
                factor_ids: ids,
            }
        })
        .collect();
    CliqueGraph { cliques, links }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn k(n: &str) -> VariableKey {
        VariableKey::new(n, 0, 1)
    }

    fn pair(a: &str, b: &str) -> CanonicalFactor {
        CanonicalFactor::new(
            vec![k(a), k(b)],
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]),
        )
        .unwrap()
    }

    fn unary(a: &str) -> CanonicalFactor {
        CanonicalFactor::new(vec![k(a)], DVector::zeros(1), DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn acyclic_graph_keeps_singleton_cliques() {
        let mut g = FactorGraph::new();
        g.add_factor(unary("a")).unwrap();
        g.add_factor(pair("a", "b")).unwrap();
        g.add_factor(pair("b", "c")).unwrap();
        let cg = g.form_cliques();
        assert_eq!(cg.cliques.len(), 3);
        assert!(cg.cliques.iter().all(|c| c.variables.len() == 1));
        assert!(cg.is_forest());
    }

    #[test]
    fn loop_through_shared_hub_forms_one_clique() {
        // local set L linked to three common sets; fusion factors close two loops
        let mut g = FactorGraph::new();
        g.add_factor(unary("L")).unwrap();
        for c in ["ijm", "im", "ij"] {
            g.add_factor(pair("L", c)).unwrap();
        }
        g.add_factor(pair("ijm", "im")).unwrap();
        g.add_factor(pair("ijm", "ij")).unwrap();
        let cg = g.form_cliques();
        assert!(cg.is_forest());
        let merged: Vec<_> = cg.cliques.iter().filter(|c| c.variables.len() > 1).collect();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].variables, vec![k("L"), k("ijm")]);
        assert_eq!(cg.cliques.len(), 3);
        assert_eq!(cg.links.len(), 2);
    }

    #[test]
    fn disjoint_triangles_give_two_cliques() {
        let mut g = FactorGraph::new();
        for (a, b) in [("a", "b"), ("b", "c"), ("c", "a"), ("d", "e"), ("e", "f"), ("f", "d")] {
            g.add_factor(pair(a, b)).unwrap();
        }
        let cg = g.form_cliques();
        assert!(cg.is_forest());
        assert_eq!(cg.cliques.iter().filter(|c| c.variables.len() > 1).count(), 2);
        // every original factor lands in exactly one clique or link
        let mut seen: Vec<FactorId> = cg
            .cliques
            .iter()
            .flat_map(|c| c.factor_ids.clone())
            .chain(cg.links.iter().flat_map(|l| l.factor_ids.clone()))
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }
}

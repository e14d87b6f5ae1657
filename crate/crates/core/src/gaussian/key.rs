use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// A block of state variables, identified by `(name, timestep)`.
///
/// Equality, ordering and hashing only look at the identity; `dim` rides along and
/// conflicts are reported wherever two scopes are merged.
#[derive(Clone, Debug)]
pub struct VariableKey {
    name: Arc<str>,
    timestep: u32,
    dim: usize,
}

impl VariableKey {
    pub fn new(name: impl Into<Arc<str>>, timestep: u32, dim: usize) -> Self {
        assert!(dim > 0, "variable blocks must have positive dimension");
        VariableKey {
            name: name.into(),
            timestep,
            dim,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn name_arc(&self) -> &Arc<str> {
        &self.name
    }

    pub fn timestep(&self) -> u32 {
        self.timestep
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same variable block at another timestep.
    pub fn at(&self, timestep: u32) -> Self {
        VariableKey {
            name: Arc::clone(&self.name),
            timestep,
            dim: self.dim,
        }
    }
}

impl PartialEq for VariableKey {
    fn eq(&self, other: &Self) -> bool {
        self.timestep == other.timestep && self.name == other.name
    }
}

impl Eq for VariableKey {}

impl Hash for VariableKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.timestep.hash(state);
    }
}

impl PartialOrd for VariableKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VariableKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name
            .cmp(&other.name)
            .then(self.timestep.cmp(&other.timestep))
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.timestep)
    }
}

/// Total dimension of a scope.
pub fn scope_dim(scope: &[VariableKey]) -> usize {
    scope.iter().map(VariableKey::dim).sum()
}

/// Starting offset of every block in a scope.
pub fn scope_offsets(scope: &[VariableKey]) -> Vec<usize> {
    let mut acc = 0;
    scope
        .iter()
        .map(|k| {
            let o = acc;
            acc += k.dim;
            o
        })
        .collect()
}

pub(crate) fn key_labels(keys: &[VariableKey]) -> Vec<String> {
    keys.iter().map(ToString::to_string).collect()
}

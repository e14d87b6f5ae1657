use std::collections::{BTreeMap, BTreeSet};

use super::{optimize_omega, ChannelInit, ChannelUpdate, FusionAlgorithm, FusionMessage, FusionSettings};
use crate::error::{Error, Result};
use crate::filtering::{
    add_measurement, add_prediction, conservative_filter, deflate_channel, roll_up, ConservativeReport,
    LinearDynamics, LinearMeasurement, SparsityPattern,
};
use crate::gaussian::{factor_sum_over, CanonicalDensity, CanonicalFactor, MomentGaussian, VariableKey};
use crate::graph::FactorGraph;

/// One named state block of an agent's task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpec {
    pub name: String,
    pub dim: usize,
    /// Dynamic states move forward in time on every prediction; static ones
    /// (e.g. sensor biases) stay at timestep 0.
    pub dynamic: bool,
}

impl StateSpec {
    pub fn dynamic(name: impl Into<String>, dim: usize) -> Self {
        StateSpec {
            name: name.into(),
            dim,
            dynamic: true,
        }
    }

    pub fn fixed(name: impl Into<String>, dim: usize) -> Self {
        StateSpec {
            name: name.into(),
            dim,
            dynamic: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Channel {
    common: BTreeSet<String>,
    cf: FactorGraph,
    pending: Option<CanonicalFactor>,
}

/// A robot running filtering and peer-to-peer fusion over its own task.
#[derive(Clone, Debug)]
pub struct FusionAgent {
    id: u32,
    states: BTreeMap<String, StateSpec>,
    timestep: u32,
    graph: FactorGraph,
    channels: BTreeMap<u32, Channel>,
    settings: FusionSettings,
    last_report: Option<ConservativeReport>,
}

impl FusionAgent {
    pub fn new(id: u32, states: Vec<StateSpec>, settings: FusionSettings) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut graph = FactorGraph::new();
        for s in states {
            if s.dim == 0 {
                return Err(Error::Dimension(format!("state {} has zero dimension", s.name)));
            }
            graph.add_variable(VariableKey::new(s.name.as_str(), 0, s.dim))?;
            if map.insert(s.name.clone(), s.clone()).is_some() {
                return Err(Error::Scope(format!("state {} declared twice", s.name)));
            }
        }
        Ok(FusionAgent {
            id,
            states: map,
            timestep: 0,
            graph,
            channels: BTreeMap::new(),
            settings,
            last_report: None,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn timestep(&self) -> u32 {
        self.timestep
    }

    pub fn settings(&self) -> &FusionSettings {
        &self.settings
    }

    pub fn states(&self) -> impl Iterator<Item = &StateSpec> {
        self.states.values()
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut FactorGraph {
        &mut self.graph
    }

    pub fn neighbors(&self) -> Vec<u32> {
        self.channels.keys().copied().collect()
    }

    pub fn channel_graph(&self, neighbor: u32) -> Option<&FactorGraph> {
        self.channels.get(&neighbor).map(|c| &c.cf)
    }

    /// Deflation report of the most recent conservative prediction step.
    pub fn last_report(&self) -> Option<ConservativeReport> {
        self.last_report
    }

    /// The current variable for a task state.
    pub fn key(&self, name: &str) -> Result<VariableKey> {
        let s = self
            .states
            .get(name)
            .ok_or_else(|| Error::Scope(format!("agent {} has no state {name}", self.id)))?;
        Ok(self.key_of(s))
    }

    fn key_of(&self, s: &StateSpec) -> VariableKey {
        let t = if s.dynamic { self.timestep } else { 0 };
        VariableKey::new(s.name.as_str(), t, s.dim)
    }

    /// Current task variables in canonical order.
    pub fn task_keys(&self) -> Vec<VariableKey> {
        let mut keys: Vec<VariableKey> = self.states.values().map(|s| self.key_of(s)).collect();
        keys.sort();
        keys
    }

    pub fn common_keys(&self, neighbor: u32) -> Result<Vec<VariableKey>> {
        let ch = self.channels.get(&neighbor).ok_or(Error::UnknownNeighbor(neighbor))?;
        Ok(self.keys_named(&ch.common))
    }

    fn keys_named(&self, names: &BTreeSet<String>) -> Vec<VariableKey> {
        let mut keys: Vec<VariableKey> = names.iter().map(|n| self.key_of(&self.states[n])).collect();
        keys.sort();
        keys
    }

    fn is_local_name(&self, name: &str) -> bool {
        !self.channels.values().any(|c| c.common.contains(name))
    }

    /// Variables not shared with any neighbor.
    pub fn local_keys(&self) -> Vec<VariableKey> {
        self.task_keys()
            .into_iter()
            .filter(|k| self.is_local_name(k.name()))
            .collect()
    }

    /// Declares a link; `common` must name task states.
    pub fn add_neighbor(&mut self, neighbor: u32, common: &[String]) -> Result<()> {
        if neighbor == self.id {
            return Err(Error::Config(format!("agent {} cannot neighbor itself", self.id)));
        }
        let mut names = BTreeSet::new();
        for n in common {
            if !self.states.contains_key(n) {
                return Err(Error::Scope(format!("agent {} shares unknown state {n} with {neighbor}", self.id)));
            }
            names.insert(n.clone());
        }
        let mut cf = FactorGraph::new();
        for k in self.keys_named(&names) {
            cf.add_variable(k)?;
        }
        self.channels.insert(
            neighbor,
            Channel {
                common: names,
                cf,
                pending: None,
            },
        );
        Ok(())
    }

    pub fn add_factor(&mut self, f: CanonicalFactor) -> Result<()> {
        self.graph.add_factor(f)?;
        Ok(())
    }

    /// Seeds every channel filter; call after the priors are in place.
    pub fn initialize_channels(&mut self, init: ChannelInit) -> Result<()> {
        if init == ChannelInit::Empty {
            return Ok(());
        }
        let neighbors = self.neighbors();
        for j in neighbors {
            let keys = self.common_keys(j)?;
            if keys.is_empty() {
                continue;
            }
            let marginal = self.graph.marginal_factor(&keys)?;
            let ch = self.channels.get_mut(&j).expect("listed neighbor");
            ch.cf.replace_factors([marginal])?;
        }
        Ok(())
    }

    /// Measurement over named states; columns of `H` follow `names` in order.
    pub fn measure(&mut self, names: &[&str], m: &LinearMeasurement) -> Result<()> {
        let keys = names.iter().map(|n| self.key(n)).collect::<Result<Vec<_>>>()?;
        add_measurement(&mut self.graph, &keys, m)
    }

    /// Moves every dynamic state one step forward and rolls up the past, either
    /// exactly or through conservative filtering.
    pub fn predict(&mut self, dynamics: &BTreeMap<String, LinearDynamics>) -> Result<Option<ConservativeReport>> {
        let dynamic: Vec<StateSpec> = self.states.values().filter(|s| s.dynamic).cloned().collect();
        for s in &dynamic {
            if !dynamics.contains_key(&s.name) {
                return Err(Error::Config(format!("agent {}: no dynamics for state {}", self.id, s.name)));
            }
        }
        let past: Vec<VariableKey> = dynamic.iter().map(|s| self.key_of(s)).collect();
        for (s, k) in dynamic.iter().zip(&past) {
            add_prediction(&mut self.graph, k, &dynamics[&s.name])?;
        }

        let report = if self.settings.conservative {
            let local: Vec<VariableKey> = self
                .graph
                .variables()
                .filter(|k| self.is_local_name(k.name()))
                .cloned()
                .collect();
            let commons: Vec<BTreeSet<String>> = self.channels.values().map(|c| c.common.clone()).collect();
            let rep = conservative_filter(&mut self.graph, &past, &local, |vars| {
                let sets: Vec<Vec<VariableKey>> = commons
                    .iter()
                    .map(|names| vars.iter().filter(|k| names.contains(k.name())).cloned().collect())
                    .collect();
                SparsityPattern::from_common_sets(vars, &sets)
            })?;
            Some(rep)
        } else {
            roll_up(&mut self.graph, &past)?;
            None
        };
        self.last_report = report;

        let lambda = report.map_or(1.0, |r| r.lambda);
        for ch in self.channels.values_mut() {
            let mut ch_past = Vec::new();
            for s in dynamic.iter().filter(|s| ch.common.contains(&s.name)) {
                let k = VariableKey::new(s.name.as_str(), self.timestep, s.dim);
                add_prediction(&mut ch.cf, &k, &dynamics[&s.name])?;
                ch_past.push(k);
            }
            deflate_channel(&mut ch.cf, &ch_past, lambda)?;
        }
        self.timestep += 1;
        Ok(report)
    }

    /// Moment form of the local joint over the whole task.
    pub fn estimate(&self) -> Result<MomentGaussian> {
        Ok(self.graph.joint_density()?.to_moments())
    }

    /// Builds the message for `neighbor` from the local marginal over the common
    /// variables.
    pub fn prepare_message(&mut self, neighbor: u32) -> Result<FusionMessage> {
        let keys = self.common_keys(neighbor)?;
        let marginal = self.graph.marginal_factor(&keys)?;
        let factor = match self.settings.algo {
            FusionAlgorithm::HsCf => {
                let ch = self.channels.get_mut(&neighbor).expect("checked by common_keys");
                let shared = ch.cf.joint_factor()?.align_scope(&keys)?;
                let new_info = marginal.diff(&shared)?;
                match self.settings.channel_update {
                    ChannelUpdate::OnSend => ch.cf.replace_factors([marginal])?,
                    ChannelUpdate::OnAck => ch.pending = Some(new_info.clone()),
                }
                new_info
            }
            FusionAlgorithm::HsCi => marginal,
        };
        Ok(FusionMessage {
            sender: self.id,
            recipient: neighbor,
            timestep: self.timestep,
            algo: self.settings.algo,
            factors: vec![factor],
        })
    }

    /// Delivery confirmation for the last message sent to `neighbor`; only
    /// matters for [`ChannelUpdate::OnAck`].
    pub fn acknowledge(&mut self, neighbor: u32, delivered: bool) -> Result<()> {
        let ch = self.channels.get_mut(&neighbor).ok_or(Error::UnknownNeighbor(neighbor))?;
        if let Some(f) = ch.pending.take() {
            if delivered {
                ch.cf.add_factor(f)?;
            }
        }
        Ok(())
    }

    /// Fuses a received message. For HS-CI the local side of the intersection is
    /// the current marginal, so earlier fusions in the same round are accounted
    /// for and the joint stays positive definite.
    pub fn fuse_message(&mut self, msg: &FusionMessage) -> Result<()> {
        if msg.recipient != self.id {
            return Err(Error::Fusion(format!(
                "message for agent {} delivered to agent {}",
                msg.recipient, self.id
            )));
        }
        if msg.algo != self.settings.algo {
            return Err(Error::Fusion(format!(
                "agent {} runs {} but received {}",
                self.id,
                self.settings.algo.label(),
                msg.algo.label()
            )));
        }
        let keys = self.common_keys(msg.sender)?;
        for f in &msg.factors {
            if let Some(k) = f.scope().iter().find(|k| !keys.contains(k)) {
                return Err(Error::Scope(format!(
                    "message from {} mentions {k}, outside the common set",
                    msg.sender
                )));
            }
        }
        match self.settings.algo {
            FusionAlgorithm::HsCf => {
                let ch = self.channels.get_mut(&msg.sender).expect("checked by common_keys");
                for f in msg.factors.iter().filter(|f| !f.is_empty()) {
                    self.graph.add_factor(f.clone())?;
                    ch.cf.add_factor(f.clone())?;
                }
            }
            FusionAlgorithm::HsCi => {
                if keys.is_empty() {
                    return Ok(());
                }
                let remote = factor_sum_over(&msg.factors, keys.clone())?;
                let local = self.graph.marginal_factor(&keys)?;
                let as_density = |f: CanonicalFactor, who: &str| {
                    CanonicalDensity::new(f).map_err(|_| Error::Fusion(format!("{who} marginal is not positive definite")))
                };
                let local_d = as_density(local, "local")?;
                let remote_d = as_density(remote, "remote")?;
                let w = optimize_omega(&local_d, &remote_d, self.settings.omega_cost)?;
                let update = remote_d.factor().diff(local_d.factor())?.scaled(1.0 - w);
                self.graph.add_factor(update)?;
            }
        }
        Ok(())
    }
}

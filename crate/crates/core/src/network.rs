//! Synchronous message rounds over an undirected topology with Bernoulli dropout.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{FusionAgent, FusionMessage};

/// Undirected communication graph over agent ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    edges: BTreeSet<(u32, u32)>,
}

impl Topology {
    pub fn new(edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop on agent {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Topology { edges: set })
    }

    /// Sorted edges with the smaller id first.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> BTreeSet<u32> {
        self.edges.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == id, b == id) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    fn components(&self, nodes: &BTreeSet<u32>) -> usize {
        let index: BTreeMap<u32, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = nodes.len();
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, index[&a]), find(&mut parent, index[&b]));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
        count
    }

    /// True when some set of edges forms a loop.
    pub fn is_cyclic(&self) -> bool {
        let nodes = self.nodes();
        self.edges.len() + self.components(&nodes) > nodes.len()
    }

    /// Connectivity over `agents` (agents without edges count as isolated).
    pub fn is_connected(&self, agents: &[u32]) -> bool {
        let mut nodes = self.nodes();
        nodes.extend(agents.iter().copied());
        nodes.len() <= 1 || self.components(&nodes) == 1
    }
}

/// Independent Bernoulli delivery of each message.
#[derive(Clone, Debug)]
pub struct DropoutModel {
    p_success: f64,
    rng: ChaCha8Rng,
}

impl DropoutModel {
    pub fn new(p_success: f64, seed: u64, stream: u64) -> Result<Self> {
        if !(p_success > 0.0 && p_success <= 1.0) {
            return Err(Error::Config(format!("delivery probability {p_success} outside (0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(DropoutModel { p_success, rng })
    }

    pub fn lossless() -> Self {
        DropoutModel {
            p_success: 1.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn p_success(&self) -> f64 {
        self.p_success
    }

    pub fn deliver(&mut self) -> bool {
        self.p_success >= 1.0 || self.rng.gen::<f64>() < self.p_success
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub timestep: u32,
    pub sender: u32,
    pub recipient: u32,
    #[serde(serialize_with = "as_flag")]
    pub delivered: bool,
    pub bytes: usize,
}

fn as_flag<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

/// One synchronous exchange along every edge in both directions.
///
/// All messages are prepared from the pre-round state in sorted edge order,
/// passed through the wire encoding, thinned by `dropout`, and then fused in
/// `(recipient, sender)` order.
pub fn round(agents: &mut [FusionAgent], topology: &Topology, dropout: &mut DropoutModel) -> Result<Vec<DeliveryRecord>> {
    let index: BTreeMap<u32, usize> = agents.iter().enumerate().map(|(i, a)| (a.id(), i)).collect();
    let idx = |id: u32| index.get(&id).copied().ok_or(Error::UnknownNeighbor(id));

    let mut sent: BTreeMap<(u32, u32), FusionMessage> = BTreeMap::new();
    let mut order = Vec::new();
    for (a, b) in topology.edges() {
        for (s, r) in [(a, b), (b, a)] {
            let msg = agents[idx(s)?].prepare_message(r)?;
            order.push((s, r));
            sent.insert((s, r), msg);
        }
    }

    let mut records = Vec::with_capacity(order.len());
    let mut inbox: BTreeMap<(u32, u32), FusionMessage> = BTreeMap::new();
    for (s, r) in order {
        let msg = &sent[&(s, r)];
        let bytes = msg.to_bytes()?;
        let delivered = dropout.deliver();
        records.push(DeliveryRecord {
            timestep: msg.timestep,
            sender: s,
            recipient: r,
            delivered,
            bytes: bytes.len(),
        });
        agents[idx(s)?].acknowledge(r, delivered)?;
        if delivered {
            inbox.insert((r, s), FusionMessage::from_bytes(&bytes)?);
        }
    }
    for ((r, _), msg) in &inbox {
        agents[idx(*r)?].fuse_message(msg)?;
    }
    Ok(records)
}

/// Writes the delivery log as CSV with a header row.
pub fn write_delivery_csv<W: Write>(out: W, records: &[DeliveryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

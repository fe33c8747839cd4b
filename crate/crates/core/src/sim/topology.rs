//! Node placement, neighbor sets, greedy geographic routing and flow
//! selection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ids::{FlowId, NodeId};

/// Placement attempts before giving up on a connected topology.
pub const MAX_PLACEMENT_RETRIES: usize = 1000;
/// Source/destination draws before giving up on finding a flow.
pub const MAX_FLOW_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("no connected placement found after {0} attempts")]
    Disconnected(usize),
    #[error("no source/destination pair with a greedy route of at least {min_hops} hops")]
    NoEligibleFlow { min_hops: u32 },
    #[error("{node} has no neighbor closer to {destination}")]
    Unroutable { node: NodeId, destination: NodeId },
    #[error("{0} is already the destination")]
    AtDestination(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    rho: f64,
    neighbors: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds the unit-disk graph over fixed positions.
    pub fn from_positions(positions: Vec<(f64, f64)>, rho: f64) -> Self {
        let n = positions.len();
        let mut neighbors = vec![Vec::new(); n];
        for u in 0..n {
            for v in 0..n {
                if u != v && dist(positions[u], positions[v]) <= rho {
                    neighbors[u].push(NodeId(v as u32));
                }
            }
        }
        Self {
            positions,
            rho,
            neighbors,
        }
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        self.positions[node.index()]
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node.index()]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        dist(self.position(a), self.position(b))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in &self.neighbors[u] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(v.index());
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn mean_degree(&self) -> f64 {
        let edges: usize = self.neighbors.iter().map(Vec::len).sum();
        edges as f64 / self.node_count() as f64
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Uniform placement on a `width x height` field, redrawn until connected.
pub fn build_topology(
    node_count: usize,
    field: (f64, f64),
    rho: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Topology, TopologyError> {
    if node_count < 2 {
        return Err(TopologyError::TooFewNodes(node_count));
    }
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let positions = (0..node_count)
            .map(|_| (rng.random::<f64>() * field.0, rng.random::<f64>() * field.1))
            .collect();
        let topo = Topology::from_positions(positions, rho);
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(TopologyError::Disconnected(MAX_PLACEMENT_RETRIES))
}

/// Neighbor of `current` closest to `destination`, provided it is strictly
/// closer than `current`; ties go to the lowest id.
pub fn route_next_hop(
    current: NodeId,
    destination: NodeId,
    topology: &Topology,
) -> Result<NodeId, TopologyError> {
    if current == destination {
        return Err(TopologyError::AtDestination(current));
    }
    let mut best = None;
    let mut best_dist = topology.distance(current, destination);
    for &v in topology.neighbors(current) {
        let d = topology.distance(v, destination);
        if d < best_dist {
            best = Some(v);
            best_dist = d;
        }
    }
    best.ok_or(TopologyError::Unroutable {
        node: current,
        destination,
    })
}

/// Full greedy path from `source` to `destination`, both included.
pub fn greedy_path(
    source: NodeId,
    destination: NodeId,
    topology: &Topology,
) -> Result<Vec<NodeId>, TopologyError> {
    let mut path = vec![source];
    let mut at = source;
    while at != destination {
        at = route_next_hop(at, destination, topology)?;
        path.push(at);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub source: NodeId,
    pub destination: NodeId,
    pub packet_rate: f64,
}

/// Draws `count` flows whose greedy routes reach the destination in at least
/// `min_hops` hops. Draws are sequential, so the first `k` flows do not
/// depend on `count`.
pub fn build_flows(
    topology: &Topology,
    count: usize,
    packet_rate: f64,
    min_hops: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Flow>, TopologyError> {
    let n = topology.node_count() as u32;
    let mut flows = Vec::with_capacity(count);
    let mut draws = 0;
    while flows.len() < count {
        draws += 1;
        if draws > MAX_FLOW_DRAWS {
            return Err(TopologyError::NoEligibleFlow { min_hops });
        }
        let source = NodeId(rng.random_range(0..n));
        let destination = NodeId(rng.random_range(0..n));
        if source == destination {
            continue;
        }
        match greedy_path(source, destination, topology) {
            Ok(path) if path.len() as u32 > min_hops => {}
            _ => continue,
        }
        flows.push(Flow {
            id: FlowId(flows.len() as u32),
            source,
            destination,
            packet_rate,
        });
    }
    Ok(flows)
}

//! Wiring of the gossip overlay: which subnets each node statically
//! subscribes to, the per-subnet relay meshes among those subscribers, and
//! which peers each passive observer is connected to.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::gossip::{NodeConfig, NodeId};
use crate::protocol::{SubnetId, SUBNET_COUNT};
use crate::rng::{derived_rng, domain};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("too-many-subnets: node {node} asks for {requested} static subnets, only {SUBNET_COUNT} exist")]
    TooManySubnets { node: NodeId, requested: u64 },
    #[error(
        "topology-infeasible: subnet {subnet} has {members} members but mesh degree {degree} \
         cannot connect them"
    )]
    Infeasible { subnet: u64, members: usize, degree: usize },
}

/// A node's place in the overlay.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeState {
    pub static_subnets: BTreeSet<SubnetId>,
    /// Mesh neighbors per statically subscribed subnet.
    pub mesh_neighbors: BTreeMap<SubnetId, Vec<NodeId>>,
}

/// The built overlay: node states plus each observer's connection set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub nodes: BTreeMap<NodeId, NodeState>,
    /// Indexed by observer ordinal.
    pub observer_peers: Vec<BTreeSet<NodeId>>,
    pub mesh_degree: usize,
}

impl Network {
    /// Sorted static members of a subnet's mesh.
    pub fn subnet_members(&self, subnet: SubnetId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, st)| st.static_subnets.contains(&subnet))
            .map(|(id, _)| *id)
            .collect()
    }
}

/// Draw each node's advertised static subnet set. Nodes in the
/// subscribe-to-everything posture get all 64.
pub fn assign_static_subscriptions(
    configs: &BTreeMap<NodeId, NodeConfig>,
    seed: u64,
) -> Result<BTreeMap<NodeId, BTreeSet<SubnetId>>, TopologyError> {
    let mut out = BTreeMap::new();
    for (&node, config) in configs {
        let subnets: BTreeSet<SubnetId> = if config.subscribes_all {
            SubnetId::all().collect()
        } else {
            if config.static_subnet_count > SUBNET_COUNT {
                return Err(TopologyError::TooManySubnets {
                    node,
                    requested: config.static_subnet_count,
                });
            }
            let mut rng = derived_rng(seed, domain::STATIC_SUBNETS, &[node.0 as u64]);
            rand::seq::index::sample(&mut rng, SUBNET_COUNT as usize, config.static_subnet_count as usize)
                .iter()
                .map(|i| SubnetId::new(i as u64).expect("index below subnet count"))
                .collect()
        };
        out.insert(node, subnets);
    }
    Ok(out)
}

/// Build the relay meshes and observer connection sets.
///
/// Within each subnet the static members form one connected mesh of degree
/// at most `mesh_degree`: a complete graph when the subnet is small enough,
/// otherwise a ring over a seeded ordering with chord offsets. Observers
/// connect to up to `observer_peer_cap` nodes each, drawn independently per
/// observer.
pub fn build_topology(
    configs: &BTreeMap<NodeId, NodeConfig>,
    seed: u64,
    mesh_degree: usize,
    observer_count: usize,
    observer_peer_cap: usize,
) -> Result<Network, TopologyError> {
    let static_subs = assign_static_subscriptions(configs, seed)?;
    let mut nodes: BTreeMap<NodeId, NodeState> = static_subs
        .iter()
        .map(|(&id, subs)| {
            (id, NodeState { static_subnets: subs.clone(), mesh_neighbors: BTreeMap::new() })
        })
        .collect();

    for subnet in SubnetId::all() {
        let mut members: Vec<NodeId> = static_subs
            .iter()
            .filter(|(_, subs)| subs.contains(&subnet))
            .map(|(&id, _)| id)
            .collect();
        let edges = mesh_edges(&mut members, subnet, seed, mesh_degree)?;
        for (a, b) in edges {
            nodes.get_mut(&a).unwrap().mesh_neighbors.entry(subnet).or_default().push(b);
            nodes.get_mut(&b).unwrap().mesh_neighbors.entry(subnet).or_default().push(a);
        }
    }
    for state in nodes.values_mut() {
        for neighbors in state.mesh_neighbors.values_mut() {
            neighbors.sort();
        }
    }

    let all_ids: Vec<NodeId> = configs.keys().copied().collect();
    let per_observer = observer_peer_cap.min(all_ids.len());
    let observer_peers = (0..observer_count)
        .map(|obs| {
            let mut rng = derived_rng(seed, domain::OBSERVER_PEERS, &[obs as u64]);
            rand::seq::index::sample(&mut rng, all_ids.len(), per_observer)
                .iter()
                .map(|i| all_ids[i])
                .collect()
        })
        .collect();

    Ok(Network { nodes, observer_peers, mesh_degree })
}

/// Undirected edges of one subnet mesh. `members` is reordered in place.
fn mesh_edges(
    members: &mut [NodeId],
    subnet: SubnetId,
    seed: u64,
    degree: usize,
) -> Result<BTreeSet<(NodeId, NodeId)>, TopologyError> {
    let n = members.len();
    let mut edges = BTreeSet::new();
    if n <= 1 {
        return Ok(edges);
    }

    let edge = |a: NodeId, b: NodeId| if a < b { (a, b) } else { (b, a) };
    if n <= degree + 1 {
        for i in 0..n {
            for j in i + 1..n {
                edges.insert(edge(members[i], members[j]));
            }
        }
        return Ok(edges);
    }

    // A ring needs everyone to allow two links; degree 0 or 1 cannot connect
    // three or more members at all.
    if degree < 2 {
        return Err(TopologyError::Infeasible { subnet: subnet.index(), members: n, degree });
    }

    let mut rng = derived_rng(seed, domain::MESH_ORDER, &[subnet.index()]);
    members.shuffle(&mut rng);
    // Ring plus chords: connecting i to i +/- k for k up to degree/2 keeps
    // every node at degree 2 * (degree / 2) <= degree; an extra antipodal
    // chord tops odd degrees up on even-sized rings.
    for k in 1..=degree / 2 {
        for i in 0..n {
            edges.insert(edge(members[i], members[(i + k) % n]));
        }
    }
    if degree % 2 == 1 && n % 2 == 0 {
        for i in 0..n / 2 {
            edges.insert(edge(members[i], members[i + n / 2]));
        }
    }
    Ok(edges)
}

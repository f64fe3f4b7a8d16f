//! Gossip-layer model: nodes with static ("backbone") and dynamic subnet
//! subscriptions, per-subnet relay meshes, fanout publishing for subnets the
//! origin is not subscribed to, and passive observer nodes that log every
//! delivery they see.

mod sim;
mod topology;

pub use sim::{
    estimate_message_complexity, run_epochs, schedule_dynamic_subscriptions, NoiseKnobs,
    SimOutput, SimParams, SimReceipt,
};
pub use topology::{assign_static_subscriptions, build_topology, Network, NodeState, TopologyError};

use std::fmt;

use crate::protocol::{SlotRef, SubnetId, TickInterval, ValidatorId};

/// Stable node identifier. Peers are told apart by their synthetic
/// (address, port) endpoint, which is derived injectively from the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn endpoint(self) -> Endpoint {
        let id = self.0;
        let high = id >> 10;
        Endpoint {
            ip: [10, (high >> 16) as u8, (high >> 8) as u8, high as u8],
            port: 9000 + (id & 0x3ff) as u16,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Synthetic transport endpoint of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub ip: [u8; 4],
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.ip;
        write!(f, "{a}.{b}.{c}.{d}:{}", self.port)
    }
}

/// Behavior of one simulated node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeConfig {
    /// Validators whose attestations originate from this node.
    pub hosted_validators: std::collections::BTreeSet<ValidatorId>,
    /// Number of static subnet subscriptions to draw (ignored when
    /// `subscribes_all` is set).
    pub static_subnet_count: u64,
    /// Subscribe to all 64 subnets, the "defeat the observer" posture.
    pub subscribes_all: bool,
    /// When non-empty, this node's validator client publishes through these
    /// nodes instead of through the node itself (multi-node operation or
    /// private peering). The hosting node still relays normally.
    pub relay_clients: Vec<NodeId>,
    /// Tick intervals during which the node participates. Empty means the
    /// whole run.
    pub online: Vec<TickInterval>,
}

/// One attestation message. `origin_node` is simulator ground truth and is
/// stripped before anything reaches an observer log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attestation {
    pub validator: ValidatorId,
    pub slot: SlotRef,
    pub subnet: SubnetId,
    pub origin_node: NodeId,
}

/// One delivery logged by an observer: who handed us which attestation, on
/// which subnet, at which tick. Origins are deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReceiptRecord {
    pub tick: u64,
    pub sender: NodeId,
    pub validator: ValidatorId,
    pub slot: SlotRef,
    pub subnet: SubnetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubscriptionKind {
    Static,
    Dynamic,
}

impl SubscriptionKind {
    pub fn token(self) -> &'static str {
        match self {
            SubscriptionKind::Static => "static",
            SubscriptionKind::Dynamic => "dynamic",
        }
    }
}

/// A node's advertised (static) or unadvertised (dynamic) subnet membership
/// over a tick interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SubscriptionEvent {
    pub node: NodeId,
    pub subnet: SubnetId,
    pub interval: TickInterval,
    pub kind: SubscriptionKind,
}

/// One span of an observer's connection to a peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConnectionEvent {
    pub peer: NodeId,
    pub interval: TickInterval,
}

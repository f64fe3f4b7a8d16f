//! Tick-driven gossip run: every epoch the duty schedule is drawn, each
//! validator's attestation is published on its committee's subnet, and the
//! message floods the subnet mesh one hop per tick. Observers log every copy
//! handed to them, together with the advertised subscription timeline and
//! their connection windows.

use std::collections::{BTreeMap, BTreeSet};

use crate::gossip::topology::Network;
use crate::gossip::{
    Attestation, ConnectionEvent, NodeConfig, NodeId, ReceiptRecord, SubscriptionEvent,
    SubscriptionKind,
};
use crate::protocol::{
    build_duty_schedule, DutySchedule, ProtocolError, SubnetId, TickInterval, Timing, ValidatorId,
    Window, SUBNET_COUNT,
};
use crate::rng::{coin, derived_rng, domain, subseed, unit_f64};

/// Salt offset distinguishing observer endpoints from node ids in edge-drop
/// draws. Node ids are 32-bit, so this can never collide.
const OBSERVER_SALT_BASE: u64 = 1 << 40;

/// Imperfect-information controls. Everything defaults to the realistic
/// setting rather than the analyst's best case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseKnobs {
    /// Probability that any single send (node-to-node or node-to-observer)
    /// is lost.
    pub edge_drop_prob: f64,
    /// Probability that an origin publishing on a subnet outside its own
    /// subscriptions includes the observer among its fanout targets.
    pub observer_fanout_prob: f64,
    /// Probability that an origin sends to the observer on its first hop at
    /// all; below 1.0 the observer increasingly hears about messages from
    /// relays instead of origins.
    pub origin_first_prob: f64,
    /// Whether nodes with aggregation duties join the duty subnet for the
    /// surrounding slots (unadvertised, so it confuses backbone accounting).
    pub dynamic_subscriptions: bool,
}

impl Default for NoiseKnobs {
    fn default() -> Self {
        Self {
            edge_drop_prob: 0.0,
            observer_fanout_prob: 0.9,
            origin_first_prob: 1.0,
            dynamic_subscriptions: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub epochs: u64,
    pub seed: u64,
    pub timing: Timing,
    pub committees_per_slot: u64,
    /// Fanout width used by origins publishing outside their subscriptions.
    pub fanout_size: usize,
    pub knobs: NoiseKnobs,
    /// Keep a full node-to-node delivery trace (ground truth for tests;
    /// expensive on large runs).
    pub record_deliveries: bool,
}

/// One node-to-node delivery that actually arrived, with the origin kept for
/// ground-truth checks. Observer deliveries are logged as [`ReceiptRecord`]s
/// instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimReceipt {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub validator: ValidatorId,
    pub slot: crate::protocol::SlotRef,
    pub subnet: SubnetId,
    pub origin: NodeId,
}

/// Everything a run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Raw (un-deduplicated) deliveries logged by each observer.
    pub observer_receipts: Vec<Vec<ReceiptRecord>>,
    /// Each observer's connection windows to its peers.
    pub observer_connections: Vec<Vec<ConnectionEvent>>,
    /// Advertised static and (when enabled) unadvertised dynamic
    /// subscription timeline of every node.
    pub subscriptions: Vec<SubscriptionEvent>,
    /// Which node hosts which validators; never shown to the analysis.
    pub ground_truth: BTreeMap<NodeId, BTreeSet<ValidatorId>>,
    /// Node-to-node trace, populated only when requested.
    pub deliveries: Vec<SimReceipt>,
    /// Count of node-to-node arrivals, duplicates included.
    pub mesh_deliveries: u64,
    pub total_messages: u64,
}

/// Back-of-the-envelope per-epoch delivery volume: every validator's message
/// is relayed by each mesh member of its subnet (a `avg_static_subnets / 64`
/// slice of all nodes) to up to `mesh_degree` neighbors.
pub fn estimate_message_complexity(
    nodes: u64,
    validators: u64,
    mesh_degree: u64,
    avg_static_subnets: f64,
) -> f64 {
    nodes as f64 * validators as f64 * mesh_degree as f64 * (avg_static_subnets / SUBNET_COUNT as f64)
}

/// Subnet-join windows implied by aggregation duties: the hosting node joins
/// the committee's subnet from one slot before the duty slot to one slot
/// after it.
pub fn schedule_dynamic_subscriptions(
    schedule: &DutySchedule,
    host_of: &BTreeMap<ValidatorId, NodeId>,
    timing: Timing,
) -> Result<Vec<(NodeId, SubnetId, TickInterval)>, ProtocolError> {
    let mut out = BTreeSet::new();
    for (&(slot, committee_index), aggregators) in &schedule.aggregators {
        let subnet = slot.subnet_for(committee_index)?;
        let start_slot = slot.absolute().saturating_sub(1);
        let interval = TickInterval {
            start: timing.slot_start_tick(start_slot),
            end: timing.slot_start_tick(slot.absolute() + 1) + timing.ticks_per_slot,
        };
        for validator in aggregators {
            if let Some(&node) = host_of.get(validator) {
                out.insert((node, subnet, interval));
            }
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, Copy)]
struct Delivery {
    msg: u32,
    from: NodeId,
    to: NodeId,
}

struct Sim<'a> {
    network: &'a Network,
    params: &'a SimParams,
    total_ticks: u64,
    msgs: Vec<Attestation>,
    seen: Vec<BTreeSet<NodeId>>,
    queue: Vec<Vec<Delivery>>,
    publishes: Vec<Vec<(u32, NodeId)>>,
    online: BTreeMap<NodeId, Option<Window>>,
    /// Static members per subnet, sorted.
    members: BTreeMap<SubnetId, Vec<NodeId>>,
    /// anchor -> attached dynamic subscribers, by subnet and window.
    attach_by_anchor: BTreeMap<(SubnetId, NodeId), Vec<(TickInterval, NodeId)>>,
    /// dynamic subscriber -> its anchors, by subnet and window.
    attach_by_dyn: BTreeMap<(SubnetId, NodeId), Vec<(TickInterval, Vec<NodeId>)>>,
    observer_receipts: Vec<Vec<ReceiptRecord>>,
    trace: Vec<SimReceipt>,
    mesh_deliveries: u64,
}

impl Sim<'_> {
    fn is_online(&self, node: NodeId, tick: u64) -> bool {
        match self.online.get(&node) {
            Some(Some(window)) => window.contains_tick(tick),
            Some(None) => true,
            None => false,
        }
    }

    fn dyn_anchors(&self, node: NodeId, subnet: SubnetId, tick: u64) -> Option<&[NodeId]> {
        self.attach_by_dyn.get(&(subnet, node)).and_then(|windows| {
            windows
                .iter()
                .find(|(iv, _)| iv.start <= tick && tick < iv.end)
                .map(|(_, anchors)| anchors.as_slice())
        })
    }

    fn dyn_attachees(&self, anchor: NodeId, subnet: SubnetId, tick: u64) -> Vec<NodeId> {
        self.attach_by_anchor
            .get(&(subnet, anchor))
            .map(|windows| {
                windows
                    .iter()
                    .filter(|(iv, _)| iv.start <= tick && tick < iv.end)
                    .map(|&(_, node)| node)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn edge_dropped(&self, msg: u32, from: NodeId, to_salt: u64) -> bool {
        let p = self.params.knobs.edge_drop_prob;
        p > 0.0
            && unit_f64(subseed(
                self.params.seed,
                domain::EDGE_DROP,
                &[msg as u64, from.0 as u64, to_salt],
            )) < p
    }

    fn send_to_node(&mut self, msg: u32, from: NodeId, to: NodeId, send_tick: u64) {
        let arrival = send_tick + 1;
        if arrival >= self.total_ticks || self.edge_dropped(msg, from, to.0 as u64) {
            return;
        }
        self.queue[arrival as usize].push(Delivery { msg, from, to });
    }

    fn log_observer(&mut self, observer: usize, msg: u32, sender: NodeId, arrival: u64) {
        if arrival >= self.total_ticks {
            return;
        }
        let m = self.msgs[msg as usize];
        self.observer_receipts[observer].push(ReceiptRecord {
            tick: arrival,
            sender,
            validator: m.validator,
            slot: m.slot,
            subnet: m.subnet,
        });
    }

    fn publish(&mut self, msg: u32, publisher: NodeId, tick: u64) {
        if !self.is_online(publisher, tick) || !self.seen[msg as usize].insert(publisher) {
            return;
        }
        let m = self.msgs[msg as usize];
        let arrival = tick + 1;
        let static_member = self
            .network
            .nodes
            .get(&publisher)
            .is_some_and(|st| st.static_subnets.contains(&m.subnet));
        let dyn_anchors = self.dyn_anchors(publisher, m.subnet, arrival).map(<[NodeId]>::to_vec);
        let subscribed = static_member || dyn_anchors.is_some();

        let mut targets: Vec<NodeId> = if static_member {
            let mut t: Vec<NodeId> = self.network.nodes[&publisher]
                .mesh_neighbors
                .get(&m.subnet)
                .cloned()
                .unwrap_or_default();
            t.extend(self.dyn_attachees(publisher, m.subnet, arrival));
            t
        } else if let Some(anchors) = dyn_anchors {
            anchors
        } else {
            let members = self.members.get(&m.subnet).map(Vec::as_slice).unwrap_or(&[]);
            let take = self.params.fanout_size.min(members.len());
            let mut rng = derived_rng(
                self.params.seed,
                domain::FANOUT,
                &[m.validator.0, m.slot.absolute(), publisher.0 as u64],
            );
            rand::seq::index::sample(&mut rng, members.len(), take)
                .iter()
                .map(|i| members[i])
                .collect()
        };
        targets.sort();
        targets.dedup();
        for to in targets {
            self.send_to_node(msg, publisher, to, tick);
        }

        let salts =
            |obs: usize| [m.validator.0, m.slot.absolute(), publisher.0 as u64, obs as u64];
        for obs in 0..self.network.observer_peers.len() {
            if !self.network.observer_peers[obs].contains(&publisher) {
                continue;
            }
            let knobs = self.params.knobs;
            if !subscribed
                && !coin(
                    self.params.seed,
                    domain::OBSERVER_FANOUT,
                    &salts(obs),
                    knobs.observer_fanout_prob,
                )
            {
                continue;
            }
            if !coin(self.params.seed, domain::ORIGIN_FIRST, &salts(obs), knobs.origin_first_prob)
            {
                continue;
            }
            if !self.edge_dropped(msg, publisher, OBSERVER_SALT_BASE + obs as u64) {
                self.log_observer(obs, msg, publisher, arrival);
            }
        }
    }

    fn deliver(&mut self, d: Delivery, tick: u64) {
        if !self.is_online(d.to, tick) {
            return;
        }
        self.mesh_deliveries += 1;
        let m = self.msgs[d.msg as usize];
        if self.params.record_deliveries {
            self.trace.push(SimReceipt {
                tick,
                from: d.from,
                to: d.to,
                validator: m.validator,
                slot: m.slot,
                subnet: m.subnet,
                origin: m.origin_node,
            });
        }
        if !self.seen[d.msg as usize].insert(d.to) {
            return;
        }

        let mut targets: Vec<NodeId> = self
            .network
            .nodes
            .get(&d.to)
            .and_then(|st| st.mesh_neighbors.get(&m.subnet).cloned())
            .unwrap_or_default();
        targets.extend(self.dyn_attachees(d.to, m.subnet, tick + 1));
        if let Some(anchors) = self.dyn_anchors(d.to, m.subnet, tick + 1) {
            targets.extend_from_slice(anchors);
        }
        targets.sort();
        targets.dedup();
        for to in targets {
            if to != d.from {
                self.send_to_node(d.msg, d.to, to, tick);
            }
        }
        for obs in 0..self.network.observer_peers.len() {
            if self.network.observer_peers[obs].contains(&d.to)
                && !self.edge_dropped(d.msg, d.to, OBSERVER_SALT_BASE + obs as u64)
            {
                self.log_observer(obs, d.msg, d.to, tick + 1);
            }
        }
    }
}

/// Run the gossip layer for `params.epochs` epochs over a built topology.
pub fn run_epochs(
    configs: &BTreeMap<NodeId, NodeConfig>,
    network: &Network,
    params: &SimParams,
) -> Result<SimOutput, ProtocolError> {
    let timing = params.timing;
    let total_ticks = params.epochs * timing.ticks_per_epoch();

    let mut host_of: BTreeMap<ValidatorId, NodeId> = BTreeMap::new();
    let mut validators: BTreeSet<ValidatorId> = BTreeSet::new();
    for (&node, config) in configs {
        for &v in &config.hosted_validators {
            host_of.insert(v, node);
            validators.insert(v);
        }
    }

    let online: BTreeMap<NodeId, Option<Window>> = configs
        .iter()
        .map(|(&node, config)| {
            let window = if config.online.is_empty() {
                None
            } else {
                Some(Window::normalized(config.online.clone()))
            };
            (node, window)
        })
        .collect();

    let members: BTreeMap<SubnetId, Vec<NodeId>> =
        SubnetId::all().map(|s| (s, network.subnet_members(s))).collect();

    let mut subscriptions: Vec<SubscriptionEvent> = Vec::new();
    for (&node, state) in &network.nodes {
        for &subnet in &state.static_subnets {
            subscriptions.push(SubscriptionEvent {
                node,
                subnet,
                interval: TickInterval { start: 0, end: total_ticks },
                kind: SubscriptionKind::Static,
            });
        }
    }

    let mut sim = Sim {
        network,
        params,
        total_ticks,
        msgs: Vec::new(),
        seen: Vec::new(),
        queue: vec![Vec::new(); (total_ticks + 2) as usize],
        publishes: vec![Vec::new(); (total_ticks + 2) as usize],
        online,
        members,
        attach_by_anchor: BTreeMap::new(),
        attach_by_dyn: BTreeMap::new(),
        observer_receipts: vec![Vec::new(); network.observer_peers.len()],
        trace: Vec::new(),
        mesh_deliveries: 0,
    };

    for epoch in 0..params.epochs {
        let schedule =
            build_duty_schedule(&validators, epoch, params.seed, params.committees_per_slot)?;

        for (&validator, duty) in &schedule.attestation_duty {
            let host = host_of[&validator];
            let publishers: Vec<NodeId> = match &configs[&host].relay_clients {
                relays if relays.is_empty() => vec![host],
                relays => relays.clone(),
            };
            let msg = sim.msgs.len() as u32;
            sim.msgs.push(Attestation {
                validator,
                slot: duty.slot,
                subnet: duty.subnet,
                origin_node: host,
            });
            sim.seen.push(BTreeSet::new());
            let base = timing.duty_tick(duty.slot);
            for &publisher in &publishers {
                let jitter = if publishers.len() >= 2 {
                    subseed(
                        params.seed,
                        domain::RELAY_JITTER,
                        &[validator.0, duty.slot.absolute(), publisher.0 as u64],
                    ) % (2 * publishers.len() as u64)
                } else {
                    0
                };
                let at = base + jitter;
                if at < total_ticks {
                    sim.publishes[at as usize].push((msg, publisher));
                }
            }
        }

        if params.knobs.dynamic_subscriptions {
            for (node, subnet, interval) in
                schedule_dynamic_subscriptions(&schedule, &host_of, timing)?
            {
                if network.nodes.get(&node).is_some_and(|st| st.static_subnets.contains(&subnet))
                {
                    continue;
                }
                let interval = TickInterval {
                    start: interval.start,
                    end: interval.end.min(total_ticks),
                };
                if interval.start >= interval.end {
                    continue;
                }
                subscriptions.push(SubscriptionEvent {
                    node,
                    subnet,
                    interval,
                    kind: SubscriptionKind::Dynamic,
                });
                let pool = &sim.members[&subnet];
                let take = network.mesh_degree.min(pool.len());
                let mut rng = derived_rng(
                    params.seed,
                    domain::DYNAMIC_ATTACH,
                    &[node.0 as u64, subnet.index(), interval.start],
                );
                let anchors: Vec<NodeId> = rand::seq::index::sample(&mut rng, pool.len(), take)
                    .iter()
                    .map(|i| pool[i])
                    .collect();
                for &anchor in &anchors {
                    sim.attach_by_anchor
                        .entry((subnet, anchor))
                        .or_default()
                        .push((interval, node));
                }
                sim.attach_by_dyn.entry((subnet, node)).or_default().push((interval, anchors));
            }
        }
    }

    for tick in 0..total_ticks {
        let publishes = std::mem::take(&mut sim.publishes[tick as usize]);
        for (msg, publisher) in publishes {
            sim.publish(msg, publisher, tick);
        }
        let arrivals = std::mem::take(&mut sim.queue[tick as usize]);
        for delivery in arrivals {
            sim.deliver(delivery, tick);
        }
    }

    let observer_connections: Vec<Vec<ConnectionEvent>> = network
        .observer_peers
        .iter()
        .map(|peers| {
            let mut events = Vec::new();
            for &peer in peers {
                let intervals: Vec<TickInterval> = match &sim.online[&peer] {
                    None => vec![TickInterval { start: 0, end: total_ticks }],
                    Some(window) => window.intervals().to_vec(),
                };
                for iv in intervals {
                    let clamped = TickInterval { start: iv.start, end: iv.end.min(total_ticks) };
                    if clamped.start < clamped.end {
                        events.push(ConnectionEvent { peer, interval: clamped });
                    }
                }
            }
            events
        })
        .collect();

    let ground_truth: BTreeMap<NodeId, BTreeSet<ValidatorId>> = configs
        .iter()
        .filter(|(_, c)| !c.hosted_validators.is_empty())
        .map(|(&node, c)| (node, c.hosted_validators.clone()))
        .collect();

    subscriptions.sort();
    Ok(SimOutput {
        observer_receipts: sim.observer_receipts,
        observer_connections,
        subscriptions,
        ground_truth,
        deliveries: sim.trace,
        mesh_deliveries: sim.mesh_deliveries,
        total_messages: sim.msgs.len() as u64,
    })
}

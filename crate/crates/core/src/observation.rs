//! Observer-side bookkeeping: ingesting logged receipts with first-receipt
//! deduplication, connection-quality filtering, and per-peer profiles that
//! split each validator's receipts into backbone and non-backbone counts.
//!
//! This module also owns the line formats of the four record streams a run
//! leaves behind (receipts, subscriptions, connections, ground truth). All
//! fields are decimal integers except the subscription kind token.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gossip::{ConnectionEvent, NodeId, ReceiptRecord, SubscriptionEvent, SubscriptionKind};
use crate::protocol::{SlotRef, SubnetId, TickInterval, Timing, ValidatorId, Window};

/// Retained connection time must exceed this many epochs before a peer's
/// receipts are worth analyzing.
pub const QUALIFYING_WINDOW_EPOCHS: u64 = 32;

/// Individual connection intervals shorter than this many epochs are noise
/// (reconnect churn) and are dropped before the qualification check.
pub const MIN_INTERVAL_EPOCHS: u64 = 1;

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("parse-error: {path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("schema-violation: {path}:{line}: {reason}")]
    Schema { path: String, line: usize, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Backbone/non-backbone receipt tally for one validator as seen from one
/// peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReceiptCounts {
    pub backbone: u64,
    pub nonbackbone: u64,
}

impl ReceiptCounts {
    pub fn total(self) -> u64 {
        self.backbone + self.nonbackbone
    }
}

/// Everything the analysis needs to know about one qualified peer.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerProfile {
    pub peer: NodeId,
    pub per_validator: BTreeMap<ValidatorId, ReceiptCounts>,
    /// Time-weighted average advertised subscription count over the window.
    pub n_sub_avg: f64,
    pub qualified_window: Window,
    pub total_connection_epochs: f64,
}

/// First-receipt store plus the advertised subscription and connection
/// timelines an observer accumulated over a run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservationStore {
    first_receipts: BTreeMap<(ValidatorId, u64), ReceiptRecord>,
    subscriptions: BTreeMap<NodeId, BTreeSet<SubscriptionEvent>>,
    connections: BTreeMap<NodeId, BTreeSet<TickInterval>>,
}

impl ObservationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold receipts into the store, keeping only the first receipt of each
    /// (validator, slot). Earlier ticks win; ties go to the smaller sender
    /// id, so ingestion order never matters.
    pub fn ingest_receipts(&mut self, records: impl IntoIterator<Item = ReceiptRecord>) {
        for record in records {
            let key = (record.validator, record.slot.absolute());
            match self.first_receipts.get_mut(&key) {
                Some(held) => {
                    if (record.tick, record.sender) < (held.tick, held.sender) {
                        *held = record;
                    }
                }
                None => {
                    self.first_receipts.insert(key, record);
                }
            }
        }
    }

    pub fn ingest_subscriptions(&mut self, events: impl IntoIterator<Item = SubscriptionEvent>) {
        for event in events {
            self.subscriptions.entry(event.node).or_default().insert(event);
        }
    }

    pub fn ingest_connections(&mut self, events: impl IntoIterator<Item = ConnectionEvent>) {
        for event in events {
            self.connections.entry(event.peer).or_default().insert(event.interval);
        }
    }

    pub fn first_receipts(&self) -> impl Iterator<Item = &ReceiptRecord> {
        self.first_receipts.values()
    }

    pub fn first_receipt_count(&self) -> usize {
        self.first_receipts.len()
    }

    /// First receipts grouped by the peer that delivered them.
    pub fn first_receipts_by_sender(&self) -> BTreeMap<NodeId, Vec<&ReceiptRecord>> {
        let mut by_sender: BTreeMap<NodeId, Vec<&ReceiptRecord>> = BTreeMap::new();
        for record in self.first_receipts.values() {
            by_sender.entry(record.sender).or_default().push(record);
        }
        by_sender
    }

    /// Every peer the observer was ever connected to.
    pub fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.connections.keys().copied()
    }

    pub fn subscription_events(&self, node: NodeId) -> impl Iterator<Item = &SubscriptionEvent> {
        self.subscriptions.get(&node).into_iter().flatten()
    }

    /// The peer's raw connection timeline, normalized.
    pub fn connection_timeline(&self, peer: NodeId) -> Window {
        Window::normalized(
            self.connections.get(&peer).map(|set| set.iter().copied().collect()).unwrap_or_default(),
        )
    }

    /// Retained observation window for the peer, if it qualifies.
    pub fn qualified_window(&self, peer: NodeId, timing: Timing) -> Option<Window> {
        long_connection_windows(&self.connection_timeline(peer), timing)
    }

    /// Time-weighted average number of advertised subnet subscriptions the
    /// peer held over the window. Dynamic subscriptions are unadvertised and
    /// never counted. Returns 0 for an empty window.
    pub fn average_subscription_count(&self, peer: NodeId, window: &Window) -> f64 {
        let total = window.total_ticks();
        if total == 0 {
            return 0.0;
        }
        let mut weighted = 0u64;
        for event in self.subscription_events(peer) {
            if event.kind != SubscriptionKind::Static {
                continue;
            }
            for iv in window.intervals() {
                let lo = iv.start.max(event.interval.start);
                let hi = iv.end.min(event.interval.end);
                weighted += hi.saturating_sub(lo);
            }
        }
        weighted as f64 / total as f64
    }

    /// Split the peer's first receipts inside the window into backbone and
    /// non-backbone counts per validator.
    ///
    /// A receipt is a backbone receipt when its subnet was in the peer's
    /// advertised static subscription set as the observer knew it at the
    /// receipt tick; the observer learns advertisement changes
    /// `knowledge_delay_slots` slots late. Receipts on dynamically subscribed
    /// subnets therefore land in the non-backbone bucket.
    /// A receipt counts as inside the window when its tick's epoch overlaps
    /// a retained connection interval.
    pub fn per_validator_counts(
        &self,
        peer: NodeId,
        window: &Window,
        knowledge_delay_slots: u64,
        timing: Timing,
    ) -> BTreeMap<ValidatorId, ReceiptCounts> {
        let lag = knowledge_delay_slots * timing.ticks_per_slot;
        let static_events: Vec<&SubscriptionEvent> = self
            .subscription_events(peer)
            .filter(|e| e.kind == SubscriptionKind::Static)
            .collect();
        let mut counts: BTreeMap<ValidatorId, ReceiptCounts> = BTreeMap::new();
        for record in self.first_receipts.values() {
            if record.sender != peer
                || !window.intersects_epoch(timing.epoch_of_tick(record.tick), timing)
            {
                continue;
            }
            let known_backbone = static_events.iter().any(|e| {
                e.subnet == record.subnet
                    && e.interval.start + lag <= record.tick
                    && record.tick < e.interval.end + lag
            });
            let entry = counts.entry(record.validator).or_default();
            if known_backbone {
                entry.backbone += 1;
            } else {
                entry.nonbackbone += 1;
            }
        }
        counts
    }

    /// Per-validator count of non-backbone receipts that arrived while the
    /// peer held a dynamic subscription on the receipt's subnet. These are
    /// the receipts the backbone split misclassifies, so the count feeds the
    /// diagnostics output rather than the heuristic itself.
    pub fn dynamic_nonbackbone_counts(
        &self,
        peer: NodeId,
        window: &Window,
        knowledge_delay_slots: u64,
        timing: Timing,
    ) -> BTreeMap<ValidatorId, u64> {
        let lag = knowledge_delay_slots * timing.ticks_per_slot;
        let events: Vec<&SubscriptionEvent> = self.subscription_events(peer).collect();
        let mut counts: BTreeMap<ValidatorId, u64> = BTreeMap::new();
        for record in self.first_receipts.values() {
            if record.sender != peer
                || !window.intersects_epoch(timing.epoch_of_tick(record.tick), timing)
            {
                continue;
            }
            let known_backbone = events.iter().any(|e| {
                e.kind == SubscriptionKind::Static
                    && e.subnet == record.subnet
                    && e.interval.start + lag <= record.tick
                    && record.tick < e.interval.end + lag
            });
            let dynamic = events.iter().any(|e| {
                e.kind == SubscriptionKind::Dynamic
                    && e.subnet == record.subnet
                    && e.interval.contains(record.tick)
            });
            if !known_backbone && dynamic {
                *counts.entry(record.validator).or_default() += 1;
            }
        }
        counts
    }

    /// Assemble the peer's profile, or None when its connection history does
    /// not qualify.
    pub fn build_profile(
        &self,
        peer: NodeId,
        knowledge_delay_slots: u64,
        timing: Timing,
    ) -> Option<PeerProfile> {
        let window = self.qualified_window(peer, timing)?;
        let n_sub_avg = self.average_subscription_count(peer, &window);
        let per_validator = self.per_validator_counts(peer, &window, knowledge_delay_slots, timing);
        let total_connection_epochs = window.total_ticks() as f64 / timing.ticks_per_epoch() as f64;
        Some(PeerProfile {
            peer,
            per_validator,
            n_sub_avg,
            qualified_window: window,
            total_connection_epochs,
        })
    }
}

/// Apply the connection-quality filter to a normalized timeline: drop every
/// interval shorter than one epoch, then keep the remainder only if it sums
/// to strictly more than 32 epochs.
pub fn long_connection_windows(timeline: &Window, timing: Timing) -> Option<Window> {
    let tpe = timing.ticks_per_epoch();
    let retained: Vec<TickInterval> = timeline
        .intervals()
        .iter()
        .copied()
        .filter(|iv| iv.len() >= MIN_INTERVAL_EPOCHS * tpe)
        .collect();
    let window = Window::normalized(retained);
    if window.total_ticks() > QUALIFYING_WINDOW_EPOCHS * tpe {
        Some(window)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Line formats.
//
//   receipts:      tick,sender_node,validator,epoch,slot,subnet
//   subscriptions: node,subnet,start_tick,end_tick,kind
//   connections:   peer,start_tick,end_tick
//   ground truth:  node,validator
// ---------------------------------------------------------------------------

struct LineReader<'a> {
    path: &'a Path,
    line: usize,
}

impl<'a> LineReader<'a> {
    fn parse_err(&self, reason: impl Into<String>) -> ObservationError {
        ObservationError::Parse {
            path: self.path.display().to_string(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn schema_err(&self, reason: impl Into<String>) -> ObservationError {
        ObservationError::Schema {
            path: self.path.display().to_string(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn fields<const N: usize>(&self, line: &'a str) -> Result<[&'a str; N], ObservationError> {
        let mut out = [""; N];
        let mut parts = line.split(',');
        for slot in out.iter_mut() {
            *slot = parts.next().ok_or_else(|| self.parse_err(format!("expected {N} fields")))?;
        }
        if parts.next().is_some() {
            return Err(self.parse_err(format!("expected {N} fields")));
        }
        Ok(out)
    }

    fn u64_field(&self, raw: &str, what: &str) -> Result<u64, ObservationError> {
        raw.trim()
            .parse::<u64>()
            .map_err(|_| self.parse_err(format!("{what} is not a decimal integer: {raw:?}")))
    }
}

fn read_lines<T>(
    path: &Path,
    mut parse: impl FnMut(&LineReader, &str) -> Result<T, ObservationError>,
) -> Result<Vec<T>, ObservationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ObservationError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let reader = LineReader { path, line: idx + 1 };
        if line.is_empty() {
            return Err(reader.parse_err("blank line"));
        }
        out.push(parse(&reader, line)?);
    }
    Ok(out)
}

fn write_lines<T>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
    mut render: impl FnMut(&T) -> String,
) -> Result<(), ObservationError> {
    let io_err = |source| ObservationError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    for item in items {
        writeln!(writer, "{}", render(&item)).map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

fn interval_from(
    reader: &LineReader,
    start: u64,
    end: u64,
) -> Result<TickInterval, ObservationError> {
    if start >= end {
        return Err(reader.schema_err(format!("empty interval [{start}, {end})")));
    }
    Ok(TickInterval { start, end })
}

pub fn receipt_line(r: &ReceiptRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.tick,
        r.sender,
        r.validator.0,
        r.slot.epoch(),
        r.slot.slot_in_epoch(),
        r.subnet.index()
    )
}

pub fn read_receipts(path: &Path) -> Result<Vec<ReceiptRecord>, ObservationError> {
    read_lines(path, |reader, line| {
        let [tick, sender, validator, epoch, slot, subnet] = reader.fields(line)?;
        let slot = SlotRef::new(reader.u64_field(epoch, "epoch")?, reader.u64_field(slot, "slot")?)
            .map_err(|e| reader.schema_err(e.to_string()))?;
        let subnet = SubnetId::new(reader.u64_field(subnet, "subnet")?)
            .map_err(|e| reader.schema_err(e.to_string()))?;
        let sender = reader.u64_field(sender, "sender_node")?;
        let sender = u32::try_from(sender)
            .map(NodeId)
            .map_err(|_| reader.schema_err(format!("sender_node {sender} out of range")))?;
        Ok(ReceiptRecord {
            tick: reader.u64_field(tick, "tick")?,
            sender,
            validator: ValidatorId(reader.u64_field(validator, "validator")?),
            slot,
            subnet,
        })
    })
}

pub fn write_receipts(path: &Path, records: &[ReceiptRecord]) -> Result<(), ObservationError> {
    write_lines(path, records, |r| receipt_line(r))
}

pub fn subscription_line(e: &SubscriptionEvent) -> String {
    format!(
        "{},{},{},{},{}",
        e.node,
        e.subnet.index(),
        e.interval.start,
        e.interval.end,
        e.kind.token()
    )
}

pub fn read_subscriptions(path: &Path) -> Result<Vec<SubscriptionEvent>, ObservationError> {
    read_lines(path, |reader, line| {
        let [node, subnet, start, end, kind] = reader.fields(line)?;
        let kind = match kind {
            "static" => SubscriptionKind::Static,
            "dynamic" => SubscriptionKind::Dynamic,
            other => return Err(reader.parse_err(format!("unknown subscription kind {other:?}"))),
        };
        let node = reader.u64_field(node, "node")?;
        let node = u32::try_from(node)
            .map(NodeId)
            .map_err(|_| reader.schema_err(format!("node {node} out of range")))?;
        Ok(SubscriptionEvent {
            node,
            subnet: SubnetId::new(reader.u64_field(subnet, "subnet")?)
                .map_err(|e| reader.schema_err(e.to_string()))?,
            interval: interval_from(
                reader,
                reader.u64_field(start, "start_tick")?,
                reader.u64_field(end, "end_tick")?,
            )?,
            kind,
        })
    })
}

pub fn write_subscriptions(
    path: &Path,
    events: &[SubscriptionEvent],
) -> Result<(), ObservationError> {
    write_lines(path, events, |e| subscription_line(e))
}

pub fn connection_line(e: &ConnectionEvent) -> String {
    format!("{},{},{}", e.peer, e.interval.start, e.interval.end)
}

pub fn read_connections(path: &Path) -> Result<Vec<ConnectionEvent>, ObservationError> {
    read_lines(path, |reader, line| {
        let [peer, start, end] = reader.fields(line)?;
        let peer = reader.u64_field(peer, "peer")?;
        let peer = u32::try_from(peer)
            .map(NodeId)
            .map_err(|_| reader.schema_err(format!("peer {peer} out of range")))?;
        Ok(ConnectionEvent {
            peer,
            interval: interval_from(
                reader,
                reader.u64_field(start, "start_tick")?,
                reader.u64_field(end, "end_tick")?,
            )?,
        })
    })
}

pub fn write_connections(path: &Path, events: &[ConnectionEvent]) -> Result<(), ObservationError> {
    write_lines(path, events, |e| connection_line(e))
}

pub fn read_ground_truth(
    path: &Path,
) -> Result<BTreeMap<NodeId, BTreeSet<ValidatorId>>, ObservationError> {
    let pairs = read_lines(path, |reader, line| {
        let [node, validator] = reader.fields(line)?;
        let node = reader.u64_field(node, "node")?;
        let node = u32::try_from(node)
            .map(NodeId)
            .map_err(|_| reader.schema_err(format!("node {node} out of range")))?;
        Ok((node, ValidatorId(reader.u64_field(validator, "validator")?)))
    })?;
    let mut truth: BTreeMap<NodeId, BTreeSet<ValidatorId>> = BTreeMap::new();
    for (node, validator) in pairs {
        truth.entry(node).or_default().insert(validator);
    }
    Ok(truth)
}

pub fn write_ground_truth(
    path: &Path,
    truth: &BTreeMap<NodeId, BTreeSet<ValidatorId>>,
) -> Result<(), ObservationError> {
    let pairs = truth
        .iter()
        .flat_map(|(node, vs)| vs.iter().map(move |v| (*node, *v)))
        .collect::<Vec<_>>();
    write_lines(path, &pairs, |(node, v)| format!("{node},{}", v.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Timing;

    fn receipt(tick: u64, sender: u32, validator: u64, epoch: u64, subnet: u64) -> ReceiptRecord {
        ReceiptRecord {
            tick,
            sender: NodeId(sender),
            validator: ValidatorId(validator),
            slot: SlotRef::new(epoch, 0).unwrap(),
            subnet: SubnetId::new(subnet).unwrap(),
        }
    }

    fn static_sub(node: u32, subnet: u64, start: u64, end: u64) -> SubscriptionEvent {
        SubscriptionEvent {
            node: NodeId(node),
            subnet: SubnetId::new(subnet).unwrap(),
            interval: TickInterval { start, end },
            kind: SubscriptionKind::Static,
        }
    }

    #[test]
    fn first_receipt_wins_with_sender_tiebreak() {
        let mut store = ObservationStore::new();
        store.ingest_receipts([
            receipt(12, 5, 0, 0, 3),
            receipt(10, 9, 0, 0, 3),
            receipt(10, 2, 0, 0, 3),
            receipt(11, 1, 0, 0, 3),
        ]);
        assert_eq!(store.first_receipt_count(), 1);
        let kept = store.first_receipts().next().unwrap();
        assert_eq!((kept.tick, kept.sender), (10, NodeId(2)));
    }

    #[test]
    fn reingesting_the_same_stream_changes_nothing() {
        let records =
            vec![receipt(10, 2, 0, 0, 3), receipt(12, 5, 0, 0, 3), receipt(30, 4, 1, 0, 7)];
        let mut once = ObservationStore::new();
        once.ingest_receipts(records.clone());
        let mut twice = once.clone();
        twice.ingest_receipts(records);
        assert_eq!(once, twice);
    }

    #[test]
    fn distinct_slots_are_kept_apart() {
        let mut store = ObservationStore::new();
        store.ingest_receipts([receipt(10, 2, 0, 0, 3), receipt(500, 2, 0, 1, 9)]);
        assert_eq!(store.first_receipt_count(), 2);
    }

    #[test]
    fn filter_keeps_one_long_connection() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let timeline = Window::normalized(vec![TickInterval { start: 0, end: 33 * tpe }]);
        let window = long_connection_windows(&timeline, timing).expect("qualifies");
        assert_eq!(window.total_ticks(), 33 * tpe);
    }

    #[test]
    fn filter_rejects_reconnect_churn_and_short_totals() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        // Forty half-epoch connections: 20 epochs of cumulative time, every
        // individual interval below the one-epoch floor.
        let churn: Vec<TickInterval> = (0..40)
            .map(|i| TickInterval { start: i * tpe, end: i * tpe + tpe / 2 })
            .collect();
        assert!(long_connection_windows(&Window::normalized(churn), timing).is_none());

        let short = Window::normalized(vec![TickInterval { start: 0, end: 10 * tpe }]);
        assert!(long_connection_windows(&short, timing).is_none());

        // Exactly 32 epochs does not qualify; the bar is strictly more.
        let boundary = Window::normalized(vec![TickInterval { start: 0, end: 32 * tpe }]);
        assert!(long_connection_windows(&boundary, timing).is_none());
    }

    #[test]
    fn filter_drops_short_intervals_before_summing() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let timeline = Window::normalized(vec![
            TickInterval { start: 0, end: 20 * tpe },
            TickInterval { start: 21 * tpe, end: 21 * tpe + tpe / 2 },
            TickInterval { start: 30 * tpe, end: 44 * tpe },
        ]);
        let window = long_connection_windows(&timeline, timing).expect("34 retained epochs");
        assert_eq!(window.intervals().len(), 2);
        assert_eq!(window.total_ticks(), 34 * tpe);
    }

    #[test]
    fn subscription_average_is_time_weighted() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let span = 40 * tpe;
        let mut store = ObservationStore::new();
        // Two subnets the whole time, two more for the second half.
        store.ingest_subscriptions([
            static_sub(1, 0, 0, span),
            static_sub(1, 1, 0, span),
            static_sub(1, 2, span / 2, span),
            static_sub(1, 3, span / 2, span),
        ]);
        let window = Window::normalized(vec![TickInterval { start: 0, end: span }]);
        assert_eq!(store.average_subscription_count(NodeId(1), &window), 3.0);

        let mut constant = ObservationStore::new();
        constant.ingest_subscriptions([static_sub(2, 0, 0, span), static_sub(2, 5, 0, span)]);
        assert_eq!(constant.average_subscription_count(NodeId(2), &window), 2.0);

        let mut all = ObservationStore::new();
        all.ingest_subscriptions(
            crate::protocol::SubnetId::all().map(|s| SubscriptionEvent {
                node: NodeId(3),
                subnet: s,
                interval: TickInterval { start: 0, end: span },
                kind: SubscriptionKind::Static,
            }),
        );
        assert_eq!(all.average_subscription_count(NodeId(3), &window), 64.0);
    }

    #[test]
    fn dynamic_subscriptions_never_count_toward_the_average() {
        let timing = Timing::default();
        let span = 40 * timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        store.ingest_subscriptions([
            static_sub(1, 0, 0, span),
            SubscriptionEvent {
                node: NodeId(1),
                subnet: SubnetId::new(9).unwrap(),
                interval: TickInterval { start: 0, end: span },
                kind: SubscriptionKind::Dynamic,
            },
        ]);
        let window = Window::normalized(vec![TickInterval { start: 0, end: span }]);
        assert_eq!(store.average_subscription_count(NodeId(1), &window), 1.0);
    }

    #[test]
    fn receipts_split_by_advertised_membership() {
        let timing = Timing::default();
        let span = 40 * timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        store.ingest_subscriptions([static_sub(1, 3, 0, span)]);
        store.ingest_receipts([
            receipt(100, 1, 7, 0, 3),  // advertised subnet: backbone
            receipt(500, 1, 7, 1, 9),  // not advertised: non-backbone
            receipt(900, 1, 8, 2, 11), // dynamic-only subnet: non-backbone
        ]);
        let window = Window::normalized(vec![TickInterval { start: 0, end: span }]);
        let counts = store.per_validator_counts(NodeId(1), &window, 0, timing);
        assert_eq!(counts[&ValidatorId(7)], ReceiptCounts { backbone: 1, nonbackbone: 1 });
        assert_eq!(counts[&ValidatorId(8)], ReceiptCounts { backbone: 0, nonbackbone: 1 });
    }

    #[test]
    fn knowledge_delay_misclassifies_fresh_advertisements() {
        let timing = Timing::default();
        let span = 40 * timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        store.ingest_subscriptions([static_sub(1, 3, 0, span)]);
        // Receipt lands within the first slot of the subscription.
        store.ingest_receipts([receipt(timing.ticks_per_slot - 1, 1, 7, 0, 3)]);
        let window = Window::normalized(vec![TickInterval { start: 0, end: span }]);

        let exact = store.per_validator_counts(NodeId(1), &window, 0, timing);
        assert_eq!(exact[&ValidatorId(7)], ReceiptCounts { backbone: 1, nonbackbone: 0 });

        let delayed = store.per_validator_counts(NodeId(1), &window, 1, timing);
        assert_eq!(delayed[&ValidatorId(7)], ReceiptCounts { backbone: 0, nonbackbone: 1 });
    }

    #[test]
    fn receipts_outside_the_window_are_ignored_at_epoch_granularity() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        store.ingest_subscriptions([static_sub(1, 3, 0, 100 * tpe)]);
        store.ingest_receipts([
            receipt(5 * tpe + 1, 1, 7, 5, 9),  // epoch 5: overlaps retained span
            receipt(50 * tpe + 1, 1, 7, 50, 9), // epoch 50: outside
        ]);
        let window = Window::normalized(vec![TickInterval { start: 0, end: 40 * tpe }]);
        let counts = store.per_validator_counts(NodeId(1), &window, 0, timing);
        assert_eq!(counts[&ValidatorId(7)].total(), 1);
    }

    #[test]
    fn profile_requires_qualification() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        store.ingest_connections([ConnectionEvent {
            peer: NodeId(1),
            interval: TickInterval { start: 0, end: 10 * tpe },
        }]);
        assert!(store.build_profile(NodeId(1), 0, timing).is_none());

        store.ingest_connections([ConnectionEvent {
            peer: NodeId(1),
            interval: TickInterval { start: 0, end: 40 * tpe },
        }]);
        let profile = store.build_profile(NodeId(1), 0, timing).expect("qualifies");
        assert_eq!(profile.total_connection_epochs, 40.0);
        assert!(profile.per_validator.is_empty());
    }

    #[test]
    fn counts_partition_the_windowed_receipts_by_sender() {
        let timing = Timing::default();
        let tpe = timing.ticks_per_epoch();
        let mut store = ObservationStore::new();
        let span = 40 * tpe;
        for peer in 1..=3u32 {
            store.ingest_connections([ConnectionEvent {
                peer: NodeId(peer),
                interval: TickInterval { start: 0, end: span },
            }]);
        }
        store.ingest_receipts((0..90u64).map(|i| {
            receipt(i * tpe / 4, 1 + (i % 3) as u32, i, (i * tpe / 4) / tpe, (i % 7) + 1)
        }));
        let mut counted = 0u64;
        for peer in 1..=3u32 {
            let window = store.qualified_window(NodeId(peer), timing).unwrap();
            counted += store
                .per_validator_counts(NodeId(peer), &window, 0, timing)
                .values()
                .map(|c| c.total())
                .sum::<u64>();
        }
        assert_eq!(counted, store.first_receipt_count() as u64);
    }

    #[test]
    fn stream_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let receipts = vec![receipt(10, 2, 0, 0, 3), receipt(500, 4, 1, 1, 9)];
        let subs = vec![
            static_sub(1, 3, 0, 999),
            SubscriptionEvent {
                node: NodeId(2),
                subnet: SubnetId::new(8).unwrap(),
                interval: TickInterval { start: 5, end: 77 },
                kind: SubscriptionKind::Dynamic,
            },
        ];
        let conns = vec![ConnectionEvent {
            peer: NodeId(2),
            interval: TickInterval { start: 0, end: 400 },
        }];

        let rp = dir.path().join("receipts.csv");
        write_receipts(&rp, &receipts).unwrap();
        assert_eq!(read_receipts(&rp).unwrap(), receipts);
        assert_eq!(std::fs::read_to_string(&rp).unwrap(), "10,2,0,0,0,3\n500,4,1,1,0,9\n");

        let sp = dir.path().join("subscriptions.csv");
        write_subscriptions(&sp, &subs).unwrap();
        assert_eq!(read_subscriptions(&sp).unwrap(), subs);

        let cp = dir.path().join("connections.csv");
        write_connections(&cp, &conns).unwrap();
        assert_eq!(read_connections(&cp).unwrap(), conns);

        let gt: BTreeMap<NodeId, BTreeSet<ValidatorId>> =
            [(NodeId(1), [ValidatorId(4), ValidatorId(5)].into_iter().collect())]
                .into_iter()
                .collect();
        let gp = dir.path().join("ground_truth.csv");
        write_ground_truth(&gp, &gt).unwrap();
        assert_eq!(read_ground_truth(&gp).unwrap(), gt);
    }

    #[test]
    fn malformed_lines_carry_positions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("receipts.csv");

        std::fs::write(&path, "10,2,0,0,0,3\nnot,a,receipt\n").unwrap();
        let err = read_receipts(&path).unwrap_err().to_string();
        assert!(err.contains("parse-error") && err.contains(":2:"), "{err}");

        std::fs::write(&path, "10,2,0,0,0,64\n").unwrap();
        let err = read_receipts(&path).unwrap_err().to_string();
        assert!(err.contains("schema-violation") && err.contains(":1:"), "{err}");

        std::fs::write(&path, "10,2,0,0,32,5\n").unwrap();
        let err = read_receipts(&path).unwrap_err().to_string();
        assert!(err.contains("schema-violation"), "{err}");
    }
}

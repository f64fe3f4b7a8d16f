//! Beacon-style duty arithmetic: epochs of 32 slots, 64 attestation subnets,
//! one attestation duty per validator per epoch, and seeded aggregator
//! selection targeting 16 aggregators per committee.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::RngExt;
use thiserror::Error;

use crate::rng::{self, domain};

pub const SLOTS_PER_EPOCH: u64 = 32;
pub const SUBNET_COUNT: u64 = 64;
pub const TARGET_AGGREGATORS_PER_COMMITTEE: u64 = 16;
pub const DEFAULT_COMMITTEES_PER_SLOT: u64 = 64;
pub const DEFAULT_TICKS_PER_SLOT: u64 = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("empty-validator-set: a duty schedule needs at least one validator")]
    EmptyValidatorSet,
    #[error("invalid-committee: index {0} outside [0, {SUBNET_COUNT})")]
    InvalidCommittee(u64),
    #[error("invalid-committee-count: {0} outside [1, {SUBNET_COUNT}]")]
    InvalidCommitteeCount(u64),
    #[error("invalid-slot: slot {0} outside [0, {SLOTS_PER_EPOCH})")]
    InvalidSlot(u64),
    #[error("invalid-subnet: id {0} outside [0, {SUBNET_COUNT})")]
    InvalidSubnet(u64),
}

/// Dense validator index, 0..validator_count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValidatorId(pub u64);

/// Attestation subnet index in [0, 64).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubnetId(u8);

impl SubnetId {
    pub fn new(raw: u64) -> Result<Self, ProtocolError> {
        if raw < SUBNET_COUNT {
            Ok(SubnetId(raw as u8))
        } else {
            Err(ProtocolError::InvalidSubnet(raw))
        }
    }

    pub fn index(self) -> u64 {
        u64::from(self.0)
    }

    /// All 64 subnets in ascending order.
    pub fn all() -> impl Iterator<Item = SubnetId> {
        (0..SUBNET_COUNT as u8).map(SubnetId)
    }
}

/// A slot addressed as (epoch, slot-in-epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotRef {
    epoch: u64,
    slot_in_epoch: u64,
}

impl SlotRef {
    pub fn new(epoch: u64, slot_in_epoch: u64) -> Result<Self, ProtocolError> {
        if slot_in_epoch < SLOTS_PER_EPOCH {
            Ok(SlotRef { epoch, slot_in_epoch })
        } else {
            Err(ProtocolError::InvalidSlot(slot_in_epoch))
        }
    }

    pub fn from_absolute(slot: u64) -> Self {
        SlotRef {
            epoch: slot / SLOTS_PER_EPOCH,
            slot_in_epoch: slot % SLOTS_PER_EPOCH,
        }
    }

    pub fn epoch(self) -> u64 {
        self.epoch
    }

    pub fn slot_in_epoch(self) -> u64 {
        self.slot_in_epoch
    }

    pub fn absolute(self) -> u64 {
        self.epoch * SLOTS_PER_EPOCH + self.slot_in_epoch
    }

    /// Subnet carrying this slot's committee. The mapping is identity mod 64,
    /// so with at most 64 committees per slot it is a bijection.
    pub fn subnet_for(self, committee_index: u64) -> Result<SubnetId, ProtocolError> {
        if committee_index >= SUBNET_COUNT {
            return Err(ProtocolError::InvalidCommittee(committee_index));
        }
        SubnetId::new(committee_index % SUBNET_COUNT)
    }
}

/// Conversion between the integer tick clock and slots/epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub ticks_per_slot: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { ticks_per_slot: DEFAULT_TICKS_PER_SLOT }
    }
}

impl Timing {
    pub fn ticks_per_epoch(self) -> u64 {
        self.ticks_per_slot * SLOTS_PER_EPOCH
    }

    pub fn slot_of_tick(self, tick: u64) -> u64 {
        tick / self.ticks_per_slot
    }

    pub fn epoch_of_tick(self, tick: u64) -> u64 {
        tick / self.ticks_per_epoch()
    }

    pub fn slot_start_tick(self, absolute_slot: u64) -> u64 {
        absolute_slot * self.ticks_per_slot
    }

    pub fn epoch_start_tick(self, epoch: u64) -> u64 {
        epoch * self.ticks_per_epoch()
    }

    /// Tick at which a duty in this slot is acted on (the slot's first tick).
    pub fn duty_tick(self, slot: SlotRef) -> u64 {
        self.slot_start_tick(slot.absolute())
    }
}

/// Half-open tick interval [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TickInterval {
    pub start: u64,
    pub end: u64,
}

impl TickInterval {
    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, tick: u64) -> bool {
        self.start <= tick && tick < self.end
    }
}

/// A normalized union of tick intervals: sorted, disjoint, never abutting.
///
/// Used both for raw connection timelines and for the retained observation
/// window after short connections are filtered out.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Window {
    intervals: Vec<TickInterval>,
}

impl Window {
    /// Normalize arbitrary raw intervals: drop empty ones, sort, and merge
    /// overlapping or abutting spans into single intervals.
    pub fn normalized(mut raw: Vec<TickInterval>) -> Self {
        raw.retain(|iv| !iv.is_empty());
        raw.sort_by_key(|iv| (iv.start, iv.end));
        let mut merged: Vec<TickInterval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match merged.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => merged.push(iv),
            }
        }
        Window { intervals: merged }
    }

    pub fn intervals(&self) -> &[TickInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_ticks(&self) -> u64 {
        self.intervals.iter().map(TickInterval::len).sum()
    }

    pub fn contains_tick(&self, tick: u64) -> bool {
        self.intervals.iter().any(|iv| iv.start <= tick && tick < iv.end)
    }

    /// Number of epochs wholly covered by this window.
    pub fn complete_epochs(&self, timing: Timing) -> u64 {
        let tpe = timing.ticks_per_epoch();
        self.intervals
            .iter()
            .map(|iv| (iv.end / tpe).saturating_sub(iv.start.div_ceil(tpe)))
            .sum()
    }

    /// Whether the given epoch overlaps any interval of the window.
    pub fn intersects_epoch(&self, epoch: u64, timing: Timing) -> bool {
        let start = timing.epoch_start_tick(epoch);
        let end = start + timing.ticks_per_epoch();
        self.intervals.iter().any(|iv| iv.start < end && iv.end > start)
    }
}

/// One validator's attestation duty within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttestationDuty {
    pub slot: SlotRef,
    pub committee_index: u64,
    pub subnet: SubnetId,
}

/// All attestation and aggregation duties of one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DutySchedule {
    pub epoch: u64,
    pub attestation_duty: BTreeMap<ValidatorId, AttestationDuty>,
    pub aggregators: BTreeMap<(SlotRef, u64), BTreeSet<ValidatorId>>,
}

/// Split `total` items into `parts` loads differing by at most one,
/// heavier loads first.
fn balanced_loads(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Assign every validator exactly one attestation duty in the epoch and
/// select the epoch's aggregators.
///
/// Validators are partitioned uniformly (loads differ by at most one) across
/// the 32 slots, and each slot's validators across up to
/// `committees_per_slot` committees; empty committees are never created.
/// The same (validators, epoch, seed) always yields the same schedule.
pub fn build_duty_schedule(
    validators: &BTreeSet<ValidatorId>,
    epoch: u64,
    seed: u64,
    committees_per_slot: u64,
) -> Result<DutySchedule, ProtocolError> {
    if validators.is_empty() {
        return Err(ProtocolError::EmptyValidatorSet);
    }
    if committees_per_slot == 0 || committees_per_slot > SUBNET_COUNT {
        return Err(ProtocolError::InvalidCommitteeCount(committees_per_slot));
    }

    let mut pool: Vec<ValidatorId> = validators.iter().copied().collect();
    pool.shuffle(&mut rng::derived_rng(seed, domain::DUTY_SHUFFLE, &[epoch]));

    let mut attestation_duty = BTreeMap::new();
    let mut aggregators = BTreeMap::new();
    let mut cursor = 0usize;
    for (slot_in_epoch, &slot_load) in
        balanced_loads(pool.len(), SLOTS_PER_EPOCH as usize).iter().enumerate()
    {
        let slot = SlotRef::new(epoch, slot_in_epoch as u64)?;
        if slot_load == 0 {
            continue;
        }
        let slot_pool = &pool[cursor..cursor + slot_load];
        cursor += slot_load;

        let committees = (committees_per_slot as usize).min(slot_load);
        let mut offset = 0usize;
        for (index, &committee_load) in balanced_loads(slot_load, committees).iter().enumerate() {
            let committee_index = index as u64;
            let members: BTreeSet<ValidatorId> =
                slot_pool[offset..offset + committee_load].iter().copied().collect();
            offset += committee_load;

            let subnet = slot.subnet_for(committee_index)?;
            for &v in &members {
                attestation_duty.insert(v, AttestationDuty { slot, committee_index, subnet });
            }
            let agg_seed = rng::subseed(
                seed,
                domain::AGGREGATORS,
                &[epoch, slot_in_epoch as u64, committee_index],
            );
            aggregators.insert((slot, committee_index), select_aggregators(&members, agg_seed));
        }
    }

    Ok(DutySchedule { epoch, attestation_duty, aggregators })
}

/// Select each committee member independently with probability
/// min(1, 16 / |committee|), so 16 aggregators are chosen on average.
/// Deterministic for a given (committee, seed); empty input selects nobody.
pub fn select_aggregators(committee: &BTreeSet<ValidatorId>, seed: u64) -> BTreeSet<ValidatorId> {
    if committee.is_empty() {
        return BTreeSet::new();
    }
    let p = (TARGET_AGGREGATORS_PER_COMMITTEE as f64 / committee.len() as f64).min(1.0);
    let mut rng = rng::derived_rng(seed, domain::AGGREGATORS, &[]);
    committee.iter().copied().filter(|_| rng.random_bool(p)).collect()
}

/// Attestations an observer should expect from one validator over a window:
/// one per wholly covered epoch. The validator identity does not change the
/// count (every validator attests exactly once per epoch) but is kept so
/// call sites read as per-validator expectations.
pub fn expected_attestations(_validator: ValidatorId, window: &Window, timing: Timing) -> u64 {
    window.complete_epochs(timing)
}

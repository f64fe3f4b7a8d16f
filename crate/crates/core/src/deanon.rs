//! The locating heuristic: per (peer, validator) condition checks over a
//! peer's receipt profile, and the four-way categorization of every
//! qualified peer.
//!
//! A validator is attributed to a peer when all four conditions hold:
//! most of its receipts arrive outside the peer's advertised backbone (C1),
//! the peer is not subscribed to everything (C2), enough of the expected
//! attestation stream actually arrived (C3), and the validator's receipt
//! count stands out from the peer's population of observed validators (C4).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gossip::NodeId;
use crate::observation::{ObservationStore, PeerProfile};
use crate::protocol::{expected_attestations, Timing, ValidatorId, SUBNET_COUNT};

#[derive(Debug, Error)]
pub enum DeanonError {
    #[error("invalid-nsub: {0} is outside [0, 64]")]
    InvalidNsub(f64),
    #[error("not-qualified: peer {0} has no qualifying connection window")]
    NotQualified(NodeId),
    #[error("parse-error: {path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Tunable heuristic parameters, defaulting to the reference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicParams {
    /// Slack factor on the C1 non-backbone-proportion threshold.
    pub c1_slack: f64,
    /// C3 accepts a validator when received >= expected / c3_divisor.
    pub c3_divisor: f64,
    /// C4 sigma multiplier.
    pub c4_sigma: f64,
    /// Below this many observed validators, C4 is treated as satisfied —
    /// a peer hosting a handful of validators has no meaningful population
    /// statistics to stand out from.
    pub c4_min_population: usize,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self { c1_slack: 0.9, c3_divisor: 10.0, c4_sigma: 2.0, c4_min_population: 10 }
    }
}

/// Per-(peer, validator) evaluation of the four conditions, with the
/// intermediate quantities kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionVector {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub c4: bool,
    pub nonbackbone_ratio: f64,
    pub expected: u64,
    pub received: u64,
    pub mean_peer: f64,
    pub std_peer: f64,
}

impl ConditionVector {
    pub fn passes(&self) -> bool {
        self.c1 && self.c2 && self.c3 && self.c4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PeerCategory {
    Deanonymized,
    NoValidators,
    AllSubnets,
    Rest,
}

impl PeerCategory {
    pub fn token(self) -> &'static str {
        match self {
            PeerCategory::Deanonymized => "deanonymized",
            PeerCategory::NoValidators => "no_validators",
            PeerCategory::AllSubnets => "all_subnets",
            PeerCategory::Rest => "rest",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "deanonymized" => PeerCategory::Deanonymized,
            "no_validators" => PeerCategory::NoValidators,
            "all_subnets" => PeerCategory::AllSubnets,
            "rest" => PeerCategory::Rest,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerOutcome {
    pub category: PeerCategory,
    pub hosted: BTreeSet<ValidatorId>,
}

/// One observer's categorization of every qualified peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeanonReport {
    pub observer: String,
    pub per_peer: BTreeMap<NodeId, PeerOutcome>,
}

impl DeanonReport {
    /// Validators attributed to each deanonymized peer.
    pub fn located(&self) -> impl Iterator<Item = (NodeId, &BTreeSet<ValidatorId>)> {
        self.per_peer
            .iter()
            .filter(|(_, o)| o.category == PeerCategory::Deanonymized)
            .map(|(&p, o)| (p, &o.hosted))
    }
}

/// One audit row per (peer, validator): the condition vector plus how many
/// of the non-backbone receipts coincided with a dynamic subscription of the
/// peer (the main source of false attributions).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub peer: NodeId,
    pub validator: ValidatorId,
    pub backbone: u64,
    pub nonbackbone: u64,
    pub dyn_nonbackbone: u64,
    pub conditions: ConditionVector,
    pub located: bool,
}

/// C1 threshold for a peer averaging `n_sub_avg` advertised subnets.
///
/// Written in tenths so that the reference slack of 0.9 yields exact decimal
/// thresholds (0.9 has no finite binary expansion, but 9/640ths do).
pub fn c1_threshold(n_sub_avg: f64, slack: f64) -> Result<f64, DeanonError> {
    if !(0.0..=SUBNET_COUNT as f64).contains(&n_sub_avg) {
        return Err(DeanonError::InvalidNsub(n_sub_avg));
    }
    Ok((slack * 10.0) * (SUBNET_COUNT as f64 - n_sub_avg) / 640.0)
}

/// Evaluate C1-C4 for every validator seen from the peer.
pub fn evaluate_conditions(
    profile: &PeerProfile,
    params: &HeuristicParams,
    timing: Timing,
) -> Result<BTreeMap<ValidatorId, ConditionVector>, DeanonError> {
    let threshold = c1_threshold(profile.n_sub_avg, params.c1_slack)?;
    let c2 = profile.n_sub_avg < SUBNET_COUNT as f64;

    let totals: Vec<u64> = profile.per_validator.values().map(|c| c.total()).collect();
    let population = totals.len();
    let mean = if population == 0 {
        0.0
    } else {
        totals.iter().sum::<u64>() as f64 / population as f64
    };
    let variance = if population == 0 {
        0.0
    } else {
        totals.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / population as f64
    };
    let std = variance.sqrt();

    let mut out = BTreeMap::new();
    for (&validator, counts) in &profile.per_validator {
        let received = counts.total();
        let expected = expected_attestations(validator, &profile.qualified_window, timing);
        let ratio = counts.nonbackbone as f64 / received as f64;
        out.insert(
            validator,
            ConditionVector {
                c1: ratio > threshold,
                c2,
                c3: received as f64 >= expected as f64 / params.c3_divisor,
                c4: population < params.c4_min_population
                    || received as f64 > mean + params.c4_sigma * std,
                nonbackbone_ratio: ratio,
                expected,
                received,
                mean_peer: mean,
                std_peer: std,
            },
        );
    }
    Ok(out)
}

/// Put one qualified peer into its category.
pub fn classify(
    profile: &PeerProfile,
    conditions: &BTreeMap<ValidatorId, ConditionVector>,
) -> PeerOutcome {
    if profile.n_sub_avg >= SUBNET_COUNT as f64 {
        return PeerOutcome { category: PeerCategory::AllSubnets, hosted: BTreeSet::new() };
    }
    if profile.per_validator.values().all(|c| c.nonbackbone == 0) {
        return PeerOutcome { category: PeerCategory::NoValidators, hosted: BTreeSet::new() };
    }
    let hosted: BTreeSet<ValidatorId> =
        conditions.iter().filter(|(_, v)| v.passes()).map(|(&v, _)| v).collect();
    if hosted.is_empty() {
        PeerOutcome { category: PeerCategory::Rest, hosted }
    } else {
        PeerOutcome { category: PeerCategory::Deanonymized, hosted }
    }
}

/// Profile, evaluate and categorize a single peer, failing when its
/// connection history does not qualify.
pub fn classify_peer(
    store: &ObservationStore,
    peer: NodeId,
    params: &HeuristicParams,
    knowledge_delay_slots: u64,
    timing: Timing,
) -> Result<PeerOutcome, DeanonError> {
    let profile = store
        .build_profile(peer, knowledge_delay_slots, timing)
        .ok_or(DeanonError::NotQualified(peer))?;
    let conditions = evaluate_conditions(&profile, params, timing)?;
    Ok(classify(&profile, &conditions))
}

/// Run the whole pipeline over every connected peer. Unqualified peers are
/// silently excluded, mirroring the connection-length filter.
pub fn deanonymize(
    store: &ObservationStore,
    observer: &str,
    params: &HeuristicParams,
    knowledge_delay_slots: u64,
    timing: Timing,
) -> Result<DeanonReport, DeanonError> {
    let mut per_peer = BTreeMap::new();
    for peer in store.peers() {
        match classify_peer(store, peer, params, knowledge_delay_slots, timing) {
            Ok(outcome) => {
                per_peer.insert(peer, outcome);
            }
            Err(DeanonError::NotQualified(_)) => {}
            Err(other) => return Err(other),
        }
    }
    Ok(DeanonReport { observer: observer.to_string(), per_peer })
}

/// Audit rows for every (qualified peer, validator) pair, including the
/// dynamic-subscription overlap counts that explain false attributions.
pub fn diagnostics(
    store: &ObservationStore,
    params: &HeuristicParams,
    knowledge_delay_slots: u64,
    timing: Timing,
) -> Result<Vec<DiagnosticsRow>, DeanonError> {
    let mut rows = Vec::new();
    for peer in store.peers() {
        let Some(profile) = store.build_profile(peer, knowledge_delay_slots, timing) else {
            continue;
        };
        let conditions = evaluate_conditions(&profile, params, timing)?;
        let dyn_overlap = store.dynamic_nonbackbone_counts(
            peer,
            &profile.qualified_window,
            knowledge_delay_slots,
            timing,
        );
        for (&validator, counts) in &profile.per_validator {
            let vector = conditions[&validator];
            rows.push(DiagnosticsRow {
                peer,
                validator,
                backbone: counts.backbone,
                nonbackbone: counts.nonbackbone,
                dyn_nonbackbone: dyn_overlap.get(&validator).copied().unwrap_or(0),
                conditions: vector,
                located: vector.passes(),
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Report and diagnostics files.
//
//   report:      peer,category,hosted_count,hosted_ids...
//   diagnostics: peer,validator,backbone,nonbackbone,dyn_nonbackbone,
//                nonbackbone_ratio,expected,received,mean_peer,std_peer,
//                c1,c2,c3,c4,located
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DeanonError + '_ {
    move |source| DeanonError::Io { path: path.to_path_buf(), source }
}

pub fn write_report(path: &Path, report: &DeanonReport) -> Result<(), DeanonError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for (peer, outcome) in &report.per_peer {
        let mut line = format!("{peer},{},{}", outcome.category.token(), outcome.hosted.len());
        for v in &outcome.hosted {
            line.push_str(&format!(",{}", v.0));
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_report(path: &Path, observer: &str) -> Result<DeanonReport, DeanonError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut per_peer = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let err = |reason: String| DeanonError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason,
        };
        let mut parts = line.split(',');
        let peer = parts
            .next()
            .and_then(|s| s.parse::<u32>().ok())
            .map(NodeId)
            .ok_or_else(|| err("bad peer id".into()))?;
        let category = parts
            .next()
            .and_then(PeerCategory::from_token)
            .ok_or_else(|| err("bad category".into()))?;
        let count = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err("bad hosted count".into()))?;
        let hosted: BTreeSet<ValidatorId> = parts
            .map(|s| s.parse::<u64>().map(ValidatorId))
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad validator id".into()))?;
        if hosted.len() != count {
            return Err(err(format!("hosted count {count} != {} ids", hosted.len())));
        }
        per_peer.insert(peer, PeerOutcome { category, hosted });
    }
    Ok(DeanonReport { observer: observer.to_string(), per_peer })
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticsRow]) -> Result<(), DeanonError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for r in rows {
        let c = &r.conditions;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.peer,
            r.validator.0,
            r.backbone,
            r.nonbackbone,
            r.dyn_nonbackbone,
            c.nonbackbone_ratio,
            c.expected,
            c.received,
            c.mean_peer,
            c.std_peer,
            c.c1 as u8,
            c.c2 as u8,
            c.c3 as u8,
            c.c4 as u8,
            r.located as u8
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>, DeanonError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let err = |reason: &str| DeanonError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(err("expected 15 fields"));
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err("bad flag")),
        };
        rows.push(DiagnosticsRow {
            peer: NodeId(fields[0].parse().map_err(|_| err("bad peer"))?),
            validator: ValidatorId(fields[1].parse().map_err(|_| err("bad validator"))?),
            backbone: fields[2].parse().map_err(|_| err("bad backbone count"))?,
            nonbackbone: fields[3].parse().map_err(|_| err("bad nonbackbone count"))?,
            dyn_nonbackbone: fields[4].parse().map_err(|_| err("bad dynamic count"))?,
            conditions: ConditionVector {
                nonbackbone_ratio: fields[5].parse().map_err(|_| err("bad ratio"))?,
                expected: fields[6].parse().map_err(|_| err("bad expected"))?,
                received: fields[7].parse().map_err(|_| err("bad received"))?,
                mean_peer: fields[8].parse().map_err(|_| err("bad mean"))?,
                std_peer: fields[9].parse().map_err(|_| err("bad std"))?,
                c1: flag(fields[10])?,
                c2: flag(fields[11])?,
                c3: flag(fields[12])?,
                c4: flag(fields[13])?,
            },
            located: flag(fields[14])?,
        });
    }
    Ok(rows)
}

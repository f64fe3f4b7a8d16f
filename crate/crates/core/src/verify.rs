//! Plausibility checks on located validator sets.
//!
//! A deanonymized peer's hosted set is judged against external labels: it is
//! consistent when the set plausibly belongs to one operator (one dominant
//! entity label, one deposit address, one exclusive fee recipient, or a few
//! consecutive-ID blocks), and inconsistent when well-labeled validators
//! split across several entities. Inconsistent sets of twenty or more
//! validators are treated as relay infrastructure (service providers) rather
//! than hosting, and excluded from located-validator totals.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::deanon::DeanonReport;
use crate::gossip::NodeId;
use crate::protocol::ValidatorId;

/// Fee-recipient sentinel for validators that used several recipients and so
/// can never witness an "exclusively shared" recipient.
pub const MULTIPLE_RECIPIENTS: &str = "multiple";

/// Inconsistent sets at or above this size are flagged as service providers.
pub const SERVICE_PROVIDER_MIN_VALIDATORS: usize = 20;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("empty-set: consistency is undefined for zero validators")]
    EmptySet,
    #[error("insufficient-observers: agreement needs at least 2 reports, got {0}")]
    InsufficientObservers(usize),
    #[error("parse-error: {path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Partial labeling of the validator set. A validator absent from a map
/// simply has no label of that kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLabelSet {
    pub entity: BTreeMap<ValidatorId, String>,
    pub entity_class: BTreeMap<ValidatorId, String>,
    pub deposit_address: BTreeMap<ValidatorId, String>,
    pub fee_recipient: BTreeMap<ValidatorId, String>,
}

/// Escape hatches for the inconsistency rule: label classes whose diversity
/// is expected (individually named home stakers), and known entity groups
/// that legitimately share infrastructure. Both default to empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InconsistencyExceptions {
    pub exception_classes: BTreeSet<String>,
    pub allowed_entity_groups: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Unknown,
}

impl Verdict {
    pub fn token(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Unknown => "unknown",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "consistent" => Verdict::Consistent,
            "inconsistent" => Verdict::Inconsistent,
            "unknown" => Verdict::Unknown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    Single,
    Gamma1,
    Gamma2,
    Gamma3,
    Gamma4,
    I1,
    None,
}

impl Rule {
    pub fn token(self) -> &'static str {
        match self {
            Rule::Single => "single",
            Rule::Gamma1 => "gamma1",
            Rule::Gamma2 => "gamma2",
            Rule::Gamma3 => "gamma3",
            Rule::Gamma4 => "gamma4",
            Rule::I1 => "i1",
            Rule::None => "none",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "single" => Rule::Single,
            "gamma1" => Rule::Gamma1,
            "gamma2" => Rule::Gamma2,
            "gamma3" => Rule::Gamma3,
            "gamma4" => Rule::Gamma4,
            "i1" => Rule::I1,
            "none" => Rule::None,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyVerdict {
    pub verdict: Verdict,
    pub rule: Rule,
}

/// Maximal runs of ids where successive entries differ by exactly one.
/// Expects sorted, distinct input.
pub fn group_consecutive(ids: &[ValidatorId]) -> Vec<Vec<ValidatorId>> {
    let mut groups: Vec<Vec<ValidatorId>> = Vec::new();
    for &id in ids {
        match groups.last_mut() {
            Some(run) if run.last().map(|p| p.0 + 1) == Some(id.0) => run.push(id),
            _ => groups.push(vec![id]),
        }
    }
    groups
}

/// The most common value and its count among `hosted`'s entries in `map`.
fn modal_count<'a>(
    hosted: &BTreeSet<ValidatorId>,
    map: &'a BTreeMap<ValidatorId, String>,
) -> Option<(&'a str, usize)> {
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for v in hosted {
        if let Some(value) = map.get(v) {
            *tally.entry(value.as_str()).or_default() += 1;
        }
    }
    tally.into_iter().max_by_key(|&(_, n)| n).map(|(value, n)| (value, n))
}

fn exception_applies(
    hosted: &BTreeSet<ValidatorId>,
    labels: &EntityLabelSet,
    exceptions: &InconsistencyExceptions,
) -> bool {
    let labeled: Vec<&ValidatorId> =
        hosted.iter().filter(|v| labels.entity.contains_key(v)).collect();
    if labeled.is_empty() {
        return false;
    }

    // Class escape: the label diversity is wholly attributable to validators
    // of an excepted class — once those are set aside, the rest (if any)
    // agree on one entity.
    let (excepted, rest): (Vec<&&ValidatorId>, Vec<&&ValidatorId>) =
        labeled.iter().partition(|v| {
            labels
                .entity_class
                .get(**v)
                .is_some_and(|class| exceptions.exception_classes.contains(class))
        });
    if !excepted.is_empty() {
        if rest.is_empty() {
            return true;
        }
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &rest {
            *tally.entry(labels.entity[**v].as_str()).or_default() += 1;
        }
        let modal = tally.values().copied().max().unwrap_or(0);
        if modal * 10 >= 9 * rest.len() {
            return true;
        }
    }

    // Allow-list escape: every entity named in the set belongs to one known
    // shared-infrastructure group.
    let names: BTreeSet<&String> = labeled.iter().map(|v| &labels.entity[*v]).collect();
    exceptions
        .allowed_entity_groups
        .iter()
        .any(|group| names.iter().all(|name| group.contains(*name)))
}

/// Judge one hosted set. Consistency rules are tried in a fixed order
/// before the inconsistency rule; all thresholds use integer arithmetic so
/// the 90%/30%/10% boundaries are exact.
pub fn check_consistency(
    hosted: &BTreeSet<ValidatorId>,
    labels: &EntityLabelSet,
    exceptions: &InconsistencyExceptions,
) -> Result<ConsistencyVerdict, VerifyError> {
    let n = hosted.len();
    if n == 0 {
        return Err(VerifyError::EmptySet);
    }
    if n == 1 {
        return Ok(ConsistencyVerdict { verdict: Verdict::Consistent, rule: Rule::Single });
    }

    let labeled = hosted.iter().filter(|v| labels.entity.contains_key(v)).count();
    let modal_entity = modal_count(hosted, &labels.entity).map_or(0, |(_, c)| c);

    // One entity dominates a decently labeled set.
    if labeled * 10 >= 3 * n && modal_entity * 10 >= 9 * labeled {
        return Ok(ConsistencyVerdict { verdict: Verdict::Consistent, rule: Rule::Gamma1 });
    }
    // Nearly all funded from one deposit address.
    if modal_count(hosted, &labels.deposit_address).is_some_and(|(_, c)| c * 10 >= 9 * n) {
        return Ok(ConsistencyVerdict { verdict: Verdict::Consistent, rule: Rule::Gamma2 });
    }
    // Nearly all exclusively paying one fee recipient.
    let exclusive_fee = modal_count(hosted, &labels.fee_recipient)
        .is_some_and(|(addr, c)| addr != MULTIPLE_RECIPIENTS && c * 10 >= 9 * n);
    if exclusive_fee {
        return Ok(ConsistencyVerdict { verdict: Verdict::Consistent, rule: Rule::Gamma3 });
    }
    // Few consecutive-ID blocks, as one deposit batch would produce.
    let ids: Vec<ValidatorId> = hosted.iter().copied().collect();
    if group_consecutive(&ids).len() <= n.div_ceil(10) {
        return Ok(ConsistencyVerdict { verdict: Verdict::Consistent, rule: Rule::Gamma4 });
    }
    // Well-labeled yet split across entities.
    if labeled * 10 >= n
        && modal_entity * 10 < 9 * labeled
        && !exception_applies(hosted, labels, exceptions)
    {
        return Ok(ConsistencyVerdict { verdict: Verdict::Inconsistent, rule: Rule::I1 });
    }
    Ok(ConsistencyVerdict { verdict: Verdict::Unknown, rule: Rule::None })
}

/// Verdicts for every deanonymized peer in a report.
pub fn verdicts_for_report(
    report: &DeanonReport,
    labels: &EntityLabelSet,
    exceptions: &InconsistencyExceptions,
) -> Result<BTreeMap<NodeId, ConsistencyVerdict>, VerifyError> {
    let mut out = BTreeMap::new();
    for (peer, hosted) in report.located() {
        out.insert(peer, check_consistency(hosted, labels, exceptions)?);
    }
    Ok(out)
}

/// Inconsistent peers with at least twenty located validators, plus the
/// pairwise overlap between their sets: entry (i, j) is the share of j's
/// validators also found on i.
pub fn detect_service_providers(
    report: &DeanonReport,
    verdicts: &BTreeMap<NodeId, ConsistencyVerdict>,
) -> (BTreeSet<NodeId>, BTreeMap<(NodeId, NodeId), f64>) {
    let flagged: BTreeSet<NodeId> = report
        .located()
        .filter(|(peer, hosted)| {
            hosted.len() >= SERVICE_PROVIDER_MIN_VALIDATORS
                && verdicts.get(peer).map(|v| v.verdict) == Some(Verdict::Inconsistent)
        })
        .map(|(peer, _)| peer)
        .collect();

    let mut matrix = BTreeMap::new();
    for &i in &flagged {
        for &j in &flagged {
            if i == j {
                continue;
            }
            let hi = &report.per_peer[&i].hosted;
            let hj = &report.per_peer[&j].hosted;
            let shared = hi.intersection(hj).count();
            matrix.insert((i, j), shared as f64 / hj.len() as f64);
        }
    }
    (flagged, matrix)
}

/// Union over reports of the peers each validator was located on. Sets
/// larger than one are the non-unique validator-to-peer mappings.
pub fn uniqueness_report(
    reports: &[DeanonReport],
) -> BTreeMap<ValidatorId, BTreeSet<NodeId>> {
    let mut out: BTreeMap<ValidatorId, BTreeSet<NodeId>> = BTreeMap::new();
    for report in reports {
        for (peer, hosted) in report.located() {
            for &v in hosted {
                out.entry(v).or_default().insert(peer);
            }
        }
    }
    out
}

/// Agreement between observers over peers that at least two of them
/// deanonymized: the fraction of such peers where every observer located the
/// identical set, and the mean Jaccard overlap over observer pairs. With no
/// such peers both figures are vacuously 1.
pub fn cross_observer_agreement(
    reports: &[DeanonReport],
) -> Result<(f64, f64), VerifyError> {
    if reports.len() < 2 {
        return Err(VerifyError::InsufficientObservers(reports.len()));
    }
    let mut per_peer: BTreeMap<NodeId, Vec<&BTreeSet<ValidatorId>>> = BTreeMap::new();
    for report in reports {
        for (peer, hosted) in report.located() {
            per_peer.entry(peer).or_default().push(hosted);
        }
    }
    per_peer.retain(|_, sets| sets.len() >= 2);
    if per_peer.is_empty() {
        return Ok((1.0, 1.0));
    }

    let exact = per_peer.values().filter(|sets| sets.iter().all(|s| *s == sets[0])).count();
    let exact_match_rate = exact as f64 / per_peer.len() as f64;

    let mut overlap_sum = 0.0;
    let mut pairs = 0usize;
    for sets in per_peer.values() {
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                let shared = sets[a].intersection(sets[b]).count();
                let union = sets[a].union(sets[b]).count();
                overlap_sum += shared as f64 / union as f64;
                pairs += 1;
            }
        }
    }
    Ok((exact_match_rate, overlap_sum / pairs as f64))
}

// ---------------------------------------------------------------------------
// Files.
//
//   labels:   validator,entity,entity_class,deposit_address,fee_recipient
//             (empty fields mean "no label of that kind")
//   verdicts: peer,verdict,rule
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> VerifyError + '_ {
    move |source| VerifyError::Io { path: path.to_path_buf(), source }
}

pub fn write_labels(path: &Path, labels: &EntityLabelSet) -> Result<(), VerifyError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let mut validators: BTreeSet<ValidatorId> = BTreeSet::new();
    validators.extend(labels.entity.keys());
    validators.extend(labels.entity_class.keys());
    validators.extend(labels.deposit_address.keys());
    validators.extend(labels.fee_recipient.keys());
    let field = |map: &BTreeMap<ValidatorId, String>, v: &ValidatorId| {
        map.get(v).cloned().unwrap_or_default()
    };
    for v in &validators {
        writeln!(
            w,
            "{},{},{},{},{}",
            v.0,
            field(&labels.entity, v),
            field(&labels.entity_class, v),
            field(&labels.deposit_address, v),
            field(&labels.fee_recipient, v)
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<EntityLabelSet, VerifyError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = EntityLabelSet::default();
    for (idx, line) in text.lines().enumerate() {
        let err = |reason: &str| VerifyError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let v = ValidatorId(fields[0].parse().map_err(|_| err("bad validator id"))?);
        let set = |map: &mut BTreeMap<ValidatorId, String>, s: &str| {
            if !s.is_empty() {
                map.insert(v, s.to_string());
            }
        };
        set(&mut labels.entity, fields[1]);
        set(&mut labels.entity_class, fields[2]);
        set(&mut labels.deposit_address, fields[3]);
        set(&mut labels.fee_recipient, fields[4]);
    }
    Ok(labels)
}

pub fn write_verdicts(
    path: &Path,
    verdicts: &BTreeMap<NodeId, ConsistencyVerdict>,
) -> Result<(), VerifyError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for (peer, v) in verdicts {
        writeln!(w, "{peer},{},{}", v.verdict.token(), v.rule.token()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_verdicts(
    path: &Path,
) -> Result<BTreeMap<NodeId, ConsistencyVerdict>, VerifyError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let err = |reason: &str| VerifyError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err("expected 3 fields"));
        }
        let peer = NodeId(fields[0].parse().map_err(|_| err("bad peer id"))?);
        let verdict = Verdict::from_token(fields[1]).ok_or_else(|| err("bad verdict"))?;
        let rule = Rule::from_token(fields[2]).ok_or_else(|| err("bad rule"))?;
        out.insert(peer, ConsistencyVerdict { verdict, rule });
    }
    Ok(out)
}

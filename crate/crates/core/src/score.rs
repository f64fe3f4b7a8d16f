//! Scoring a report against simulator ground truth.
//!
//! The simulator knows exactly which peer speaks for which validator, so
//! every report can be graded: per-peer precision/recall, micro-averaged
//! aggregates over validators, a category confusion table, and the
//! distribution of located-set sizes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deanon::{DeanonReport, PeerCategory};
use crate::gossip::NodeId;
use crate::protocol::ValidatorId;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("truth-gap: peer {0} appears in the report but not in ground truth")]
    TruthGap(NodeId),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerScore {
    pub peer: u32,
    pub category: String,
    pub precision: f64,
    pub recall: f64,
    pub hosted: usize,
    pub truth: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCell {
    /// "hosting" when ground truth assigns the peer validators, else "empty".
    pub truth: String,
    pub reported: String,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub size: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    /// Correctly located validators over all located validators.
    pub micro_precision: f64,
    /// Correctly located validators over validators assigned to qualified
    /// peers that did not subscribe to every subnet.
    pub micro_recall: f64,
    pub per_peer: Vec<PeerScore>,
    pub confusion: Vec<ConfusionCell>,
    pub cdf: Vec<CdfPoint>,
}

/// Grade a report. `truth` must cover every peer the report mentions; peers
/// the observer never categorized are ignored (they contribute to neither
/// precision nor recall).
pub fn score_against_ground_truth(
    report: &DeanonReport,
    truth: &BTreeMap<NodeId, BTreeSet<ValidatorId>>,
) -> Result<ScoreCard, ScoreError> {
    let mut per_peer = Vec::new();
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut located = 0usize;
    let mut correct_total = 0usize;
    let mut attributable = 0usize;

    for (&peer, outcome) in &report.per_peer {
        let truth_set = truth.get(&peer).ok_or(ScoreError::TruthGap(peer))?;
        let correct = outcome.hosted.intersection(truth_set).count();
        let precision = if outcome.hosted.is_empty() {
            1.0
        } else {
            correct as f64 / outcome.hosted.len() as f64
        };
        let recall = if truth_set.is_empty() {
            1.0
        } else {
            correct as f64 / truth_set.len() as f64
        };
        per_peer.push(PeerScore {
            peer: peer.0,
            category: outcome.category.token().to_string(),
            precision,
            recall,
            hosted: outcome.hosted.len(),
            truth: truth_set.len(),
            correct,
        });

        located += outcome.hosted.len();
        correct_total += correct;
        if outcome.category != PeerCategory::AllSubnets {
            attributable += truth_set.len();
        }

        let truth_label = if truth_set.is_empty() { "empty" } else { "hosting" };
        *confusion
            .entry((truth_label.to_string(), outcome.category.token().to_string()))
            .or_default() += 1;
    }

    let micro_precision = if located == 0 { 1.0 } else { correct_total as f64 / located as f64 };
    let micro_recall =
        if attributable == 0 { 1.0 } else { correct_total as f64 / attributable as f64 };

    Ok(ScoreCard {
        micro_precision,
        micro_recall,
        per_peer,
        confusion: confusion
            .into_iter()
            .map(|((truth, reported), count)| ConfusionCell { truth, reported, count })
            .collect(),
        cdf: validators_per_peer_cdf(report),
    })
}

/// Empirical CDF of hosted-set sizes over deanonymized peers, as
/// plot-ready points. Empty when nothing was deanonymized.
pub fn validators_per_peer_cdf(report: &DeanonReport) -> Vec<CdfPoint> {
    let mut sizes: Vec<usize> = report.located().map(|(_, hosted)| hosted.len()).collect();
    sizes.sort_unstable();
    let total = sizes.len();
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, size) in sizes.iter().enumerate() {
        let point = CdfPoint { size: *size, fraction: (i + 1) as f64 / total as f64 };
        match points.last_mut() {
            Some(last) if last.size == *size => *last = point,
            _ => points.push(point),
        }
    }
    points
}

pub fn write_scorecard(path: &Path, card: &ScoreCard) -> Result<(), ScoreError> {
    let text = toml::to_string(card).map_err(|e| ScoreError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text)
        .map_err(|source| ScoreError::Io { path: path.to_path_buf(), source })
}

pub fn read_scorecard(path: &Path) -> Result<ScoreCard, ScoreError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScoreError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| ScoreError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

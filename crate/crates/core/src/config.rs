//! Scenario configuration: one TOML file describing the network, the noise
//! model, the heuristic parameters, and optional label synthesis.
//!
//! Parsing is strict — unknown keys are errors — and validation reports
//! every problem at once rather than the first one found.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::deanon::HeuristicParams;
use crate::gossip::NoiseKnobs;
use crate::protocol::{DEFAULT_TICKS_PER_SLOT, SUBNET_COUNT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config:\n{}", .0.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

fn default_observer_count() -> u32 {
    1
}
fn default_observer_peer_cap() -> usize {
    1000
}
fn default_ticks_per_slot() -> u64 {
    DEFAULT_TICKS_PER_SLOT
}
fn default_mesh_degree() -> usize {
    8
}
fn default_fanout_size() -> usize {
    8
}
fn default_committees_per_slot() -> u64 {
    SUBNET_COUNT
}
fn default_static_subnets() -> u64 {
    2
}
fn default_observer_fanout_prob() -> f64 {
    0.9
}
fn default_origin_first_prob() -> f64 {
    1.0
}
fn default_knowledge_delay() -> u64 {
    1
}
fn default_true() -> bool {
    true
}
fn default_c1_slack() -> f64 {
    0.9
}
fn default_c3_divisor() -> f64 {
    10.0
}
fn default_c4_sigma() -> f64 {
    2.0
}
fn default_c4_min_population() -> usize {
    10
}
fn default_coverage() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: u32,
    pub validator_count: u64,
    pub epochs: u64,
    pub seed: u64,
    #[serde(default = "default_observer_count")]
    pub observer_count: u32,
    #[serde(default = "default_observer_peer_cap")]
    pub observer_peer_cap: usize,
    #[serde(default = "default_ticks_per_slot")]
    pub ticks_per_slot: u64,
    #[serde(default = "default_mesh_degree")]
    pub mesh_degree: usize,
    #[serde(default = "default_fanout_size")]
    pub fanout_size: usize,
    #[serde(default = "default_committees_per_slot")]
    pub committees_per_slot: u64,
    /// How many nodes (ascending from id 0) host the validators that node
    /// overrides do not explicitly claim. Defaults to all nodes.
    #[serde(default)]
    pub hosting_node_count: Option<u32>,
    #[serde(default = "default_static_subnets")]
    pub default_static_subnets: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub heuristics: HeuristicsConfig,
    #[serde(default)]
    pub node_overrides: Vec<NodeOverride>,
    #[serde(default)]
    pub labels: Option<LabelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub edge_drop_prob: f64,
    #[serde(default = "default_observer_fanout_prob")]
    pub observer_fanout_prob: f64,
    #[serde(default = "default_knowledge_delay")]
    pub knowledge_delay_slots: u64,
    #[serde(default = "default_origin_first_prob")]
    pub origin_first_prob: f64,
    #[serde(default = "default_true")]
    pub dynamic_subscriptions: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            edge_drop_prob: 0.0,
            observer_fanout_prob: default_observer_fanout_prob(),
            knowledge_delay_slots: default_knowledge_delay(),
            origin_first_prob: default_origin_first_prob(),
            dynamic_subscriptions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicsConfig {
    #[serde(default = "default_c1_slack")]
    pub c1_slack: f64,
    #[serde(default = "default_c3_divisor")]
    pub c3_divisor: f64,
    #[serde(default = "default_c4_sigma")]
    pub c4_sigma: f64,
    #[serde(default = "default_c4_min_population")]
    pub c4_min_population: usize,
}

impl Default for HeuristicsConfig {
    fn default() -> Self {
        Self {
            c1_slack: default_c1_slack(),
            c3_divisor: default_c3_divisor(),
            c4_sigma: default_c4_sigma(),
            c4_min_population: default_c4_min_population(),
        }
    }
}

impl HeuristicsConfig {
    pub fn params(&self) -> HeuristicParams {
        HeuristicParams {
            c1_slack: self.c1_slack,
            c3_divisor: self.c3_divisor,
            c4_sigma: self.c4_sigma,
            c4_min_population: self.c4_min_population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub id: u32,
    /// Claim this many validators from the unassigned pool (ascending ids).
    #[serde(default)]
    pub hosted_count: Option<u64>,
    /// Claim exactly these validator ids.
    #[serde(default)]
    pub hosted_ids: Option<Vec<u64>>,
    #[serde(default)]
    pub static_subnets: Option<u64>,
    #[serde(default)]
    pub subscribes_all: bool,
    /// Publish this node's attestations through these peers instead.
    #[serde(default)]
    pub relay_clients: Vec<u32>,
    /// Online windows as [start_tick, end_tick) pairs; omitted = always on.
    #[serde(default)]
    pub online: Option<Vec<[u64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    /// Validator counts per synthetic entity, assigned from id 0 upward in
    /// consecutive blocks (or scattered when `shuffle` is set).
    pub entity_sizes: Vec<u64>,
    /// Label classes per entity, parallel to `entity_sizes`; default "pool".
    #[serde(default)]
    pub entity_classes: Vec<String>,
    /// Probability that an entity's validator actually carries its labels.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// Probability that a carried entity label is scrambled to another
    /// entity's name.
    #[serde(default)]
    pub noise: f64,
    /// Assign entities to shuffled validator ids instead of blocks.
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default)]
    pub exception_classes: Vec<String>,
    #[serde(default)]
    pub allowed_entity_groups: Vec<Vec<String>>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialized form; its hash keys the run directory.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash_prefix(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        let mut out = String::new();
        for byte in &digest[..4] {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn run_dir_name(&self) -> String {
        format!("run_{}_s{}", self.hash_prefix(), self.seed)
    }

    pub fn noise_knobs(&self) -> NoiseKnobs {
        NoiseKnobs {
            edge_drop_prob: self.noise.edge_drop_prob,
            observer_fanout_prob: self.noise.observer_fanout_prob,
            origin_first_prob: self.noise.origin_first_prob,
            dynamic_subscriptions: self.noise.dynamic_subscriptions,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };

        check(self.node_count >= 1, "node_count must be at least 1".into());
        check(self.validator_count >= 1, "validator_count must be at least 1".into());
        check(self.epochs >= 1, "epochs must be at least 1".into());
        check(self.observer_count >= 1, "observer_count must be at least 1".into());
        check(self.observer_peer_cap >= 1, "observer_peer_cap must be at least 1".into());
        check(self.ticks_per_slot >= 1, "ticks_per_slot must be at least 1".into());
        check(self.mesh_degree >= 1, "mesh_degree must be at least 1".into());
        check(self.fanout_size >= 1, "fanout_size must be at least 1".into());
        check(
            (1..=SUBNET_COUNT).contains(&self.committees_per_slot),
            format!("committees_per_slot must be in 1..={SUBNET_COUNT}"),
        );
        check(
            self.default_static_subnets <= SUBNET_COUNT,
            format!("default_static_subnets must be at most {SUBNET_COUNT}"),
        );
        if let Some(k) = self.hosting_node_count {
            check(
                k >= 1 && k <= self.node_count,
                format!("hosting_node_count must be in 1..={}", self.node_count),
            );
        }

        let unit = 0.0..=1.0;
        check(
            unit.contains(&self.noise.edge_drop_prob),
            "noise.edge_drop_prob must be in [0, 1]".into(),
        );
        check(
            unit.contains(&self.noise.observer_fanout_prob),
            "noise.observer_fanout_prob must be in [0, 1]".into(),
        );
        check(
            unit.contains(&self.noise.origin_first_prob),
            "noise.origin_first_prob must be in [0, 1]".into(),
        );

        check(self.heuristics.c1_slack >= 0.0, "heuristics.c1_slack must not be negative".into());
        check(self.heuristics.c3_divisor > 0.0, "heuristics.c3_divisor must be positive".into());
        check(self.heuristics.c4_sigma >= 0.0, "heuristics.c4_sigma must not be negative".into());
        check(
            self.heuristics.c4_min_population >= 1,
            "heuristics.c4_min_population must be at least 1".into(),
        );

        let mut seen_ids = std::collections::BTreeSet::new();
        for (idx, over) in self.node_overrides.iter().enumerate() {
            let tag = format!("node_overrides[{idx}]");
            check(over.id < self.node_count, format!("{tag}: id {} out of range", over.id));
            check(seen_ids.insert(over.id), format!("{tag}: duplicate id {}", over.id));
            check(
                !(over.hosted_count.is_some() && over.hosted_ids.is_some()),
                format!("{tag}: hosted_count and hosted_ids are mutually exclusive"),
            );
            if let Some(ids) = &over.hosted_ids {
                for &v in ids {
                    check(
                        v < self.validator_count,
                        format!("{tag}: validator id {v} out of range"),
                    );
                }
            }
            if let Some(count) = over.hosted_count {
                check(
                    count <= self.validator_count,
                    format!("{tag}: hosted_count {count} exceeds validator_count"),
                );
            }
            if let Some(subs) = over.static_subnets {
                check(
                    subs <= SUBNET_COUNT,
                    format!("{tag}: static_subnets must be at most {SUBNET_COUNT}"),
                );
            }
            for &relay in &over.relay_clients {
                check(relay < self.node_count, format!("{tag}: relay {relay} out of range"));
                check(relay != over.id, format!("{tag}: node cannot relay through itself"));
            }
            if let Some(windows) = &over.online {
                for w in windows {
                    check(w[0] < w[1], format!("{tag}: online window [{}, {}) is empty", w[0], w[1]));
                }
            }
        }

        if let Some(labels) = &self.labels {
            check(!labels.entity_sizes.is_empty(), "labels.entity_sizes must not be empty".into());
            check(
                labels.entity_sizes.iter().all(|&s| s >= 1),
                "labels.entity_sizes entries must be at least 1".into(),
            );
            check(
                labels.entity_sizes.iter().sum::<u64>() <= self.validator_count,
                "labels.entity_sizes must not exceed validator_count in total".into(),
            );
            check(
                labels.entity_classes.is_empty()
                    || labels.entity_classes.len() == labels.entity_sizes.len(),
                "labels.entity_classes must be empty or match entity_sizes in length".into(),
            );
            check(unit.contains(&labels.coverage), "labels.coverage must be in [0, 1]".into());
            check(unit.contains(&labels.noise), "labels.noise must be in [0, 1]".into());
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "node_count = 4\nvalidator_count = 16\nepochs = 34\nseed = 7\n";

    #[test]
    fn minimal_config_gets_the_documented_defaults() {
        let config = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.observer_count, 1);
        assert_eq!(config.observer_peer_cap, 1000);
        assert_eq!(config.ticks_per_slot, 12);
        assert_eq!(config.mesh_degree, 8);
        assert_eq!(config.committees_per_slot, 64);
        assert_eq!(config.default_static_subnets, 2);
        assert_eq!(config.noise.observer_fanout_prob, 0.9);
        assert_eq!(config.noise.knowledge_delay_slots, 1);
        assert_eq!(config.noise.origin_first_prob, 1.0);
        assert!(config.noise.dynamic_subscriptions);
        assert_eq!(config.heuristics.c1_slack, 0.9);
        assert_eq!(config.heuristics.c3_divisor, 10.0);
        assert_eq!(config.heuristics.c4_sigma, 2.0);
        assert_eq!(config.heuristics.c4_min_population, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}mystery_knob = 3\n");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::Syntax(_))
        ));
        let nested = format!("{MINIMAL}[noise]\nedge_drop = 0.5\n");
        assert!(ScenarioConfig::from_toml_str(&nested).is_err());
    }

    #[test]
    fn validation_reports_every_problem_at_once() {
        let text = "node_count = 0\nvalidator_count = 0\nepochs = 34\nseed = 1\n\
                    [noise]\nedge_drop_prob = 1.5\n";
        let err = ScenarioConfig::from_toml_str(text).unwrap_err();
        let ConfigError::Invalid(problems) = err else {
            panic!("expected itemized validation, got {err}");
        };
        assert_eq!(problems.len(), 3, "{problems:?}");
        let rendered = format!("{}", ConfigError::Invalid(problems));
        assert!(rendered.contains("node_count"));
        assert!(rendered.contains("edge_drop_prob"));
    }

    #[test]
    fn override_constraints_are_checked() {
        let text = format!(
            "{MINIMAL}[[node_overrides]]\nid = 9\nrelay_clients = [9]\n\
             [[node_overrides]]\nid = 2\nhosted_count = 4\nhosted_ids = [1, 99]\n"
        );
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        let rendered = err.to_string();
        assert!(rendered.contains("id 9 out of range"));
        assert!(rendered.contains("mutually exclusive"));
        assert!(rendered.contains("validator id 99 out of range"));
    }

    #[test]
    fn run_dir_name_tracks_content_and_seed() {
        let a = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let b = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(a.run_dir_name(), b.run_dir_name());
        assert!(a.run_dir_name().starts_with("run_"));
        assert!(a.run_dir_name().ends_with("_s7"));

        let other = ScenarioConfig::from_toml_str(&MINIMAL.replace("epochs = 34", "epochs = 40"))
            .unwrap();
        assert_ne!(a.run_dir_name(), other.run_dir_name());
    }

    #[test]
    fn canonical_form_survives_a_round_trip() {
        let text = format!(
            "{MINIMAL}[labels]\nentity_sizes = [8, 8]\ncoverage = 0.5\n\
             [[node_overrides]]\nid = 1\nsubscribes_all = true\n"
        );
        let config = ScenarioConfig::from_toml_str(&text).unwrap();
        let canonical = config.canonical_toml();
        let reparsed = ScenarioConfig::from_toml_str(&canonical).unwrap();
        assert_eq!(reparsed, config);
        assert_eq!(reparsed.canonical_toml(), canonical);
    }
}

//! Orchestration: turn a config into a network, run the simulation, and
//! drive the analysis stages over the persisted logs.
//!
//! A run directory is keyed by config hash and seed and holds everything a
//! stage needs, so each stage is a pure function of the files plus its
//! parameters and can be re-run independently:
//!
//!   simulate  -> config.toml, receipts[_i].csv, connections[_i].csv,
//!                subscriptions.csv, ground_truth.csv, labels.csv
//!   analyze   -> deanon_report[_i].csv, diagnostics[_i].csv,
//!                analysis_params.toml
//!   verify    -> verdicts[_i].csv, service_providers.csv, uniqueness.csv
//!   score     -> scorecard[_i].toml
//!   report    -> summary.toml

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::deanon::{self, DeanonError, DeanonReport, HeuristicParams, PeerCategory};
use crate::gossip::{
    build_topology, run_epochs, NodeConfig, NodeId, SimParams, TopologyError,
};
use crate::observation::{self, ObservationError, ObservationStore};
use crate::protocol::{ProtocolError, TickInterval, Timing, ValidatorId};
use crate::rng::{self, coin, derived_rng, subseed};
use crate::score::{score_against_ground_truth, write_scorecard, ScoreError};
use crate::verify::{
    cross_observer_agreement, detect_service_providers, read_labels, uniqueness_report,
    verdicts_for_report, write_labels, write_verdicts, EntityLabelSet, InconsistencyExceptions,
    VerifyError,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Deanon(#[from] DeanonError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{missing} not found in {run_dir}; {hint}")]
    MissingStage { missing: String, run_dir: PathBuf, hint: String },
    #[error("{0} validators remain unassigned: every validator needs a hosting node")]
    UnassignedValidators(u64),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_path_buf(), source }
}

/// `base.ext` for the primary observer, `base_<i>.ext` for the rest.
pub fn observer_file(base: &str, ext: &str, observer: usize) -> String {
    if observer == 0 {
        format!("{base}.{ext}")
    } else {
        format!("{base}_{observer}.{ext}")
    }
}

fn observer_label(observer: usize) -> String {
    format!("observer-{observer}")
}

/// Materialize per-node configs: overrides first, then the remaining
/// validators in consecutive-ID blocks across the hosting nodes.
pub fn derive_node_configs(
    config: &ScenarioConfig,
) -> Result<BTreeMap<NodeId, NodeConfig>, ScenarioError> {
    let mut nodes: BTreeMap<NodeId, NodeConfig> = (0..config.node_count)
        .map(|id| {
            let mut node = NodeConfig::default();
            node.static_subnet_count = config.default_static_subnets;
            (NodeId(id), node)
        })
        .collect();

    let mut explicit_hosts: BTreeSet<NodeId> = BTreeSet::new();
    let mut claimed: BTreeSet<u64> = BTreeSet::new();
    for over in &config.node_overrides {
        let node = nodes.get_mut(&NodeId(over.id)).expect("validated id");
        if let Some(subs) = over.static_subnets {
            node.static_subnet_count = subs;
        }
        node.subscribes_all = over.subscribes_all;
        node.relay_clients = over.relay_clients.iter().map(|&id| NodeId(id)).collect();
        if let Some(windows) = &over.online {
            node.online =
                windows.iter().map(|w| TickInterval { start: w[0], end: w[1] }).collect();
        }
        if let Some(ids) = &over.hosted_ids {
            node.hosted_validators = ids.iter().map(|&v| ValidatorId(v)).collect();
            claimed.extend(ids.iter().copied());
            explicit_hosts.insert(NodeId(over.id));
        }
    }
    // Count-based claims draw from the pool left after exact claims.
    let pool: Vec<u64> = (0..config.validator_count).filter(|v| !claimed.contains(v)).collect();
    let mut cursor = 0usize;
    for over in &config.node_overrides {
        if let Some(count) = over.hosted_count {
            let take = (count as usize).min(pool.len() - cursor);
            let node = nodes.get_mut(&NodeId(over.id)).expect("validated id");
            node.hosted_validators = pool[cursor..cursor + take].iter().map(|&v| ValidatorId(v)).collect();
            cursor += take;
            explicit_hosts.insert(NodeId(over.id));
        }
    }
    let pool = &pool[cursor..];

    let host_limit = config.hosting_node_count.unwrap_or(config.node_count);
    let hosts: Vec<NodeId> = (0..host_limit)
        .map(NodeId)
        .filter(|id| !explicit_hosts.contains(id))
        .collect();
    if hosts.is_empty() {
        if !pool.is_empty() {
            return Err(ScenarioError::UnassignedValidators(pool.len() as u64));
        }
        return Ok(nodes);
    }
    let base = pool.len() / hosts.len();
    let extra = pool.len() % hosts.len();
    let mut offset = 0usize;
    for (i, host) in hosts.iter().enumerate() {
        let take = base + usize::from(i < extra);
        let node = nodes.get_mut(host).expect("host id in range");
        node.hosted_validators = pool[offset..offset + take].iter().map(|&v| ValidatorId(v)).collect();
        offset += take;
    }
    Ok(nodes)
}

/// Ground truth as the analysis should hope to recover it: a validator is
/// associated with the peers that actually publish its attestations — the
/// relay clients when the hosting node uses them, the host itself otherwise.
/// Every node id appears, so scoring never hits a truth gap.
pub fn association_truth(
    config: &ScenarioConfig,
    nodes: &BTreeMap<NodeId, NodeConfig>,
) -> BTreeMap<NodeId, BTreeSet<ValidatorId>> {
    let mut truth: BTreeMap<NodeId, BTreeSet<ValidatorId>> =
        (0..config.node_count).map(|id| (NodeId(id), BTreeSet::new())).collect();
    for (node, cfg) in nodes {
        let publishers: Vec<NodeId> = if cfg.relay_clients.is_empty() {
            vec![*node]
        } else {
            cfg.relay_clients.clone()
        };
        for publisher in publishers {
            truth.entry(publisher).or_default().extend(cfg.hosted_validators.iter().copied());
        }
    }
    truth
}

/// Synthetic labels: entities take consecutive validator-ID blocks (or
/// scattered ids under `shuffle`), each with its own deposit and fee tokens;
/// `coverage` drops labels and `noise` swaps an entity's name for another's.
pub fn synthesize_labels(config: &ScenarioConfig) -> EntityLabelSet {
    let mut labels = EntityLabelSet::default();
    let Some(labels_cfg) = &config.labels else {
        return labels;
    };
    let entity_count = labels_cfg.entity_sizes.len();
    let name = |i: usize| format!("entity-{i:03}");
    let class = |i: usize| -> String {
        labels_cfg.entity_classes.get(i).cloned().unwrap_or_else(|| "pool".to_string())
    };

    let mut order: Vec<u64> = (0..config.validator_count).collect();
    if labels_cfg.shuffle {
        order.shuffle(&mut derived_rng(config.seed, rng::domain::LABELS, &[3]));
    }

    let mut cursor = 0usize;
    for (entity, &size) in labels_cfg.entity_sizes.iter().enumerate() {
        for &v in &order[cursor..cursor + size as usize] {
            if !coin(config.seed, rng::domain::LABELS, &[0, v], labels_cfg.coverage) {
                continue;
            }
            let mut assigned = entity;
            if entity_count >= 2 && coin(config.seed, rng::domain::LABELS, &[1, v], labels_cfg.noise) {
                let step =
                    1 + subseed(config.seed, rng::domain::LABELS, &[2, v]) % (entity_count as u64 - 1);
                assigned = (entity + step as usize) % entity_count;
            }
            let validator = ValidatorId(v);
            labels.entity.insert(validator, name(assigned));
            labels.entity_class.insert(validator, class(assigned));
            labels.deposit_address.insert(validator, format!("dep-{}", name(assigned)));
            labels.fee_recipient.insert(validator, format!("fee-{}", name(assigned)));
        }
        cursor += size as usize;
    }
    labels
}

pub fn exceptions_from(config: &ScenarioConfig) -> InconsistencyExceptions {
    let Some(labels_cfg) = &config.labels else {
        return InconsistencyExceptions::default();
    };
    InconsistencyExceptions {
        exception_classes: labels_cfg.exception_classes.iter().cloned().collect(),
        allowed_entity_groups: labels_cfg
            .allowed_entity_groups
            .iter()
            .map(|group| group.iter().cloned().collect())
            .collect(),
    }
}

/// Parameters the analysis stages actually ran with (config values plus any
/// command-line overrides), persisted next to their outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AnalysisOverrides {
    pub c1_slack: Option<f64>,
    pub c3_divisor: Option<f64>,
    pub c4_sigma: Option<f64>,
    pub c4_min_population: Option<usize>,
    pub knowledge_delay_slots: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub c1_slack: f64,
    pub c3_divisor: f64,
    pub c4_sigma: f64,
    pub c4_min_population: usize,
    pub knowledge_delay_slots: u64,
}

impl AnalysisParams {
    pub fn resolve(config: &ScenarioConfig, overrides: &AnalysisOverrides) -> Self {
        Self {
            c1_slack: overrides.c1_slack.unwrap_or(config.heuristics.c1_slack),
            c3_divisor: overrides.c3_divisor.unwrap_or(config.heuristics.c3_divisor),
            c4_sigma: overrides.c4_sigma.unwrap_or(config.heuristics.c4_sigma),
            c4_min_population: overrides
                .c4_min_population
                .unwrap_or(config.heuristics.c4_min_population),
            knowledge_delay_slots: overrides
                .knowledge_delay_slots
                .unwrap_or(config.noise.knowledge_delay_slots),
        }
    }

    pub fn heuristics(&self) -> HeuristicParams {
        HeuristicParams {
            c1_slack: self.c1_slack,
            c3_divisor: self.c3_divisor,
            c4_sigma: self.c4_sigma,
            c4_min_population: self.c4_min_population,
        }
    }
}

fn load_config(run_dir: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let path = run_dir.join("config.toml");
    if !path.exists() {
        return Err(ScenarioError::MissingStage {
            missing: "config.toml".into(),
            run_dir: run_dir.to_path_buf(),
            hint: "is this a run directory produced by `simulate`?".into(),
        });
    }
    Ok(ScenarioConfig::load(&path)?)
}

fn require(run_dir: &Path, file: String, hint: &str) -> Result<PathBuf, ScenarioError> {
    let path = run_dir.join(&file);
    if path.exists() {
        Ok(path)
    } else {
        Err(ScenarioError::MissingStage {
            missing: file,
            run_dir: run_dir.to_path_buf(),
            hint: hint.to_string(),
        })
    }
}

/// Simulate into `<out_root>/<run_dir_name>` and run every analysis stage
/// over the persisted logs. Returns the run directory.
pub fn run_scenario(config: &ScenarioConfig, out_root: &Path) -> Result<PathBuf, ScenarioError> {
    config.validate()?;
    let nodes = derive_node_configs(config)?;
    let network = build_topology(
        &nodes,
        config.seed,
        config.mesh_degree,
        config.observer_count as usize,
        config.observer_peer_cap,
    )?;
    let params = SimParams {
        epochs: config.epochs,
        seed: config.seed,
        timing: Timing { ticks_per_slot: config.ticks_per_slot },
        committees_per_slot: config.committees_per_slot,
        fanout_size: config.fanout_size,
        knobs: config.noise_knobs(),
        record_deliveries: false,
    };
    let output = run_epochs(&nodes, &network, &params)?;

    let run_dir = out_root.join(config.run_dir_name());
    if run_dir.exists() {
        std::fs::remove_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    }
    std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;

    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, config.canonical_toml()).map_err(io_err(&config_path))?;
    observation::write_subscriptions(&run_dir.join("subscriptions.csv"), &output.subscriptions)?;
    observation::write_ground_truth(
        &run_dir.join("ground_truth.csv"),
        &association_truth(config, &nodes),
    )?;
    write_labels(&run_dir.join("labels.csv"), &synthesize_labels(config))?;
    for (i, receipts) in output.observer_receipts.iter().enumerate() {
        observation::write_receipts(&run_dir.join(observer_file("receipts", "csv", i)), receipts)?;
    }
    for (i, connections) in output.observer_connections.iter().enumerate() {
        observation::write_connections(
            &run_dir.join(observer_file("connections", "csv", i)),
            connections,
        )?;
    }

    analyze_run(&run_dir, &AnalysisOverrides::default())?;
    verify_run(&run_dir, None)?;
    score_run(&run_dir)?;
    report_run(&run_dir)?;
    Ok(run_dir)
}

/// Rebuild every observer's store from the logs and write reports and
/// diagnostics. Pure in the logs and the resolved parameters.
pub fn analyze_run(run_dir: &Path, overrides: &AnalysisOverrides) -> Result<(), ScenarioError> {
    let config = load_config(run_dir)?;
    let params = AnalysisParams::resolve(&config, overrides);
    let heuristics = params.heuristics();
    let timing = Timing { ticks_per_slot: config.ticks_per_slot };
    let subscriptions = observation::read_subscriptions(&require(
        run_dir,
        "subscriptions.csv".into(),
        "run `simulate` first",
    )?)?;

    for i in 0..config.observer_count as usize {
        let receipts = observation::read_receipts(&require(
            run_dir,
            observer_file("receipts", "csv", i),
            "run `simulate` first",
        )?)?;
        let connections = observation::read_connections(&require(
            run_dir,
            observer_file("connections", "csv", i),
            "run `simulate` first",
        )?)?;
        let mut store = ObservationStore::new();
        store.ingest_receipts(receipts);
        store.ingest_subscriptions(subscriptions.iter().copied());
        store.ingest_connections(connections);

        let report = deanon::deanonymize(
            &store,
            &observer_label(i),
            &heuristics,
            params.knowledge_delay_slots,
            timing,
        )?;
        deanon::write_report(&run_dir.join(observer_file("deanon_report", "csv", i)), &report)?;
        let rows = deanon::diagnostics(&store, &heuristics, params.knowledge_delay_slots, timing)?;
        deanon::write_diagnostics(&run_dir.join(observer_file("diagnostics", "csv", i)), &rows)?;
    }

    let params_path = run_dir.join("analysis_params.toml");
    let text = toml::to_string(&params).expect("params serialize");
    std::fs::write(&params_path, text).map_err(io_err(&params_path))?;
    Ok(())
}

fn read_reports(run_dir: &Path, config: &ScenarioConfig) -> Result<Vec<DeanonReport>, ScenarioError> {
    (0..config.observer_count as usize)
        .map(|i| {
            let path =
                require(run_dir, observer_file("deanon_report", "csv", i), "run `analyze` first")?;
            Ok(deanon::read_report(&path, &observer_label(i))?)
        })
        .collect()
}

pub fn write_service_providers(
    path: &Path,
    flagged: &BTreeSet<NodeId>,
    matrix: &BTreeMap<(NodeId, NodeId), f64>,
) -> Result<(), ScenarioError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for peer in flagged {
        writeln!(w, "flagged,{peer}").map_err(io_err(path))?;
    }
    for ((i, j), ratio) in matrix {
        writeln!(w, "overlap,{i},{j},{ratio}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_service_providers(
    path: &Path,
) -> Result<(BTreeSet<NodeId>, BTreeMap<(NodeId, NodeId), f64>), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut flagged = BTreeSet::new();
    let mut matrix = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let bad = |reason: &str| {
            ScenarioError::Observation(ObservationError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: reason.to_string(),
            })
        };
        let fields: Vec<&str> = line.split(',').collect();
        match fields.as_slice() {
            ["flagged", peer] => {
                flagged.insert(NodeId(peer.parse().map_err(|_| bad("bad peer id"))?));
            }
            ["overlap", i, j, ratio] => {
                matrix.insert(
                    (
                        NodeId(i.parse().map_err(|_| bad("bad peer id"))?),
                        NodeId(j.parse().map_err(|_| bad("bad peer id"))?),
                    ),
                    ratio.parse().map_err(|_| bad("bad ratio"))?,
                );
            }
            _ => return Err(bad("expected a flagged or overlap record")),
        }
    }
    Ok((flagged, matrix))
}

pub fn write_uniqueness(
    path: &Path,
    map: &BTreeMap<ValidatorId, BTreeSet<NodeId>>,
) -> Result<(), ScenarioError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for (validator, peers) in map {
        let mut line = format!("{},{}", validator.0, peers.len());
        for peer in peers {
            line.push_str(&format!(",{peer}"));
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_uniqueness(
    path: &Path,
) -> Result<BTreeMap<ValidatorId, BTreeSet<NodeId>>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let bad = |reason: &str| {
            ScenarioError::Observation(ObservationError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: reason.to_string(),
            })
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(bad("expected validator,count,peers..."));
        }
        let validator = ValidatorId(fields[0].parse().map_err(|_| bad("bad validator id"))?);
        let count: usize = fields[1].parse().map_err(|_| bad("bad count"))?;
        let peers: BTreeSet<NodeId> = fields[2..]
            .iter()
            .map(|s| s.parse::<u32>().map(NodeId))
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad peer id"))?;
        if peers.len() != count {
            return Err(bad("count does not match peer list"));
        }
        out.insert(validator, peers);
    }
    Ok(out)
}

/// Judge every observer's located sets against the labels, then derive the
/// service-provider flags (primary observer) and the validator-to-peer
/// uniqueness map (all observers).
pub fn verify_run(run_dir: &Path, labels_path: Option<&Path>) -> Result<(), ScenarioError> {
    let config = load_config(run_dir)?;
    let labels_file = match labels_path {
        Some(path) => path.to_path_buf(),
        None => require(run_dir, "labels.csv".into(), "pass --labels or run `simulate`")?,
    };
    let labels = read_labels(&labels_file)?;
    let exceptions = exceptions_from(&config);
    let reports = read_reports(run_dir, &config)?;

    for (i, report) in reports.iter().enumerate() {
        let verdicts = verdicts_for_report(report, &labels, &exceptions)?;
        write_verdicts(&run_dir.join(observer_file("verdicts", "csv", i)), &verdicts)?;
        if i == 0 {
            let (flagged, matrix) = detect_service_providers(report, &verdicts);
            write_service_providers(&run_dir.join("service_providers.csv"), &flagged, &matrix)?;
        }
    }
    write_uniqueness(&run_dir.join("uniqueness.csv"), &uniqueness_report(&reports))?;
    Ok(())
}

/// Score every observer's report against the association ground truth.
pub fn score_run(run_dir: &Path) -> Result<(), ScenarioError> {
    let config = load_config(run_dir)?;
    let truth_path = require(run_dir, "ground_truth.csv".into(), "run `simulate` first")?;
    let mut truth = observation::read_ground_truth(&truth_path)?;
    for id in 0..config.node_count {
        truth.entry(NodeId(id)).or_default();
    }
    for (i, report) in read_reports(run_dir, &config)?.iter().enumerate() {
        let card = score_against_ground_truth(report, &truth)?;
        write_scorecard(&run_dir.join(observer_file("scorecard", "toml", i)), &card)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub observers: u32,
    pub epochs: u64,
    pub node_count: u32,
    pub validator_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub qualified_peers: usize,
    pub deanonymized_peers: usize,
    /// Distinct validators located by the primary observer.
    pub located_validators: usize,
    pub service_providers: usize,
    /// Located validators after dropping service-provider peers.
    pub located_validators_excluding_providers: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub deanonymized: usize,
    pub no_validators: usize,
    pub all_subnets: usize,
    pub rest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub exact_match_rate: f64,
    pub mean_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessSummary {
    pub validators_located: usize,
    pub unique_mappings: usize,
    pub multi_peer_mappings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run: RunMeta,
    pub totals: Totals,
    pub categories: CategoryCounts,
    pub uniqueness: UniquenessSummary,
    pub agreement: Option<Agreement>,
}

/// Condense a fully analyzed run into `summary.toml`.
pub fn report_run(run_dir: &Path) -> Result<Summary, ScenarioError> {
    let config = load_config(run_dir)?;
    let reports = read_reports(run_dir, &config)?;
    let primary = &reports[0];
    let card = crate::score::read_scorecard(&require(
        run_dir,
        observer_file("scorecard", "toml", 0),
        "run `score` first",
    )?)?;
    let (flagged, _) = read_service_providers(&require(
        run_dir,
        "service_providers.csv".into(),
        "run `verify` first",
    )?)?;

    let mut located: BTreeSet<ValidatorId> = BTreeSet::new();
    let mut located_excluding: BTreeSet<ValidatorId> = BTreeSet::new();
    let mut categories = CategoryCounts {
        deanonymized: 0,
        no_validators: 0,
        all_subnets: 0,
        rest: 0,
    };
    for (peer, outcome) in &primary.per_peer {
        match outcome.category {
            PeerCategory::Deanonymized => categories.deanonymized += 1,
            PeerCategory::NoValidators => categories.no_validators += 1,
            PeerCategory::AllSubnets => categories.all_subnets += 1,
            PeerCategory::Rest => categories.rest += 1,
        }
        located.extend(outcome.hosted.iter().copied());
        if !flagged.contains(peer) {
            located_excluding.extend(outcome.hosted.iter().copied());
        }
    }

    let uniqueness_map = uniqueness_report(&reports);
    let multi = uniqueness_map.values().filter(|peers| peers.len() > 1).count();
    let agreement = if reports.len() >= 2 {
        let (exact_match_rate, mean_overlap) = cross_observer_agreement(&reports)?;
        Some(Agreement { exact_match_rate, mean_overlap })
    } else {
        None
    };

    let summary = Summary {
        run: RunMeta {
            config_hash: config.hash_prefix(),
            seed: config.seed,
            observers: config.observer_count,
            epochs: config.epochs,
            node_count: config.node_count,
            validator_count: config.validator_count,
        },
        totals: Totals {
            qualified_peers: primary.per_peer.len(),
            deanonymized_peers: categories.deanonymized,
            located_validators: located.len(),
            service_providers: flagged.len(),
            located_validators_excluding_providers: located_excluding.len(),
            micro_precision: card.micro_precision,
            micro_recall: card.micro_recall,
        },
        categories,
        uniqueness: UniquenessSummary {
            validators_located: uniqueness_map.len(),
            unique_mappings: uniqueness_map.len() - multi,
            multi_peer_mappings: multi,
        },
        agreement,
    };
    let path = run_dir.join("summary.toml");
    let text = toml::to_string(&summary).expect("summary serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

pub fn read_summary(run_dir: &Path) -> Result<Summary, ScenarioError> {
    let path = run_dir.join("summary.toml");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    toml::from_str(&text).map_err(|e| {
        ScenarioError::Observation(ObservationError::Parse {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })
    })
}

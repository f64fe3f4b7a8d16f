use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use attnet_sim::config::ScenarioConfig;
use attnet_sim::scenario::{self, AnalysisOverrides};

#[derive(Parser)]
#[command(
    name = "attnet-sim",
    version,
    about = "Deterministic attestation-gossip simulator with a validator-location analysis pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and run the full analysis pipeline over it.
    Simulate {
        /// Scenario description (TOML).
        config: PathBuf,
        /// Parent directory for the run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Recompute reports and diagnostics from a run's persisted logs.
    Analyze {
        run_dir: PathBuf,
        #[arg(long)]
        c1_slack: Option<f64>,
        #[arg(long)]
        c3_divisor: Option<f64>,
        #[arg(long)]
        c4_sigma: Option<f64>,
        #[arg(long)]
        c4_min_population: Option<usize>,
        /// Subscription-knowledge delay in slots.
        #[arg(long)]
        knowledge_delay: Option<u64>,
    },
    /// Judge located sets against labels and derive service providers and
    /// validator-to-peer uniqueness.
    Verify {
        run_dir: PathBuf,
        /// Label file; defaults to the run's own labels.csv.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Score every observer's report against simulator ground truth.
    Score { run_dir: PathBuf },
    /// Condense a fully analyzed run into summary.toml.
    Report { run_dir: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => {
            let config = ScenarioConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let run_dir = scenario::run_scenario(&config, &out)?;
            println!("{}", run_dir.display());
        }
        Command::Analyze {
            run_dir,
            c1_slack,
            c3_divisor,
            c4_sigma,
            c4_min_population,
            knowledge_delay,
        } => {
            let overrides = AnalysisOverrides {
                c1_slack,
                c3_divisor,
                c4_sigma,
                c4_min_population,
                knowledge_delay_slots: knowledge_delay,
            };
            scenario::analyze_run(&run_dir, &overrides)?;
        }
        Command::Verify { run_dir, labels } => {
            scenario::verify_run(&run_dir, labels.as_deref())?;
        }
        Command::Score { run_dir } => {
            scenario::score_run(&run_dir)?;
        }
        Command::Report { run_dir } => {
            let summary = scenario::report_run(&run_dir)?;
            println!(
                "peers: {} qualified, {} deanonymized, {} service providers",
                summary.totals.qualified_peers,
                summary.totals.deanonymized_peers,
                summary.totals.service_providers
            );
            println!(
                "validators: {} located ({} excluding providers), precision {:.4}, recall {:.4}",
                summary.totals.located_validators,
                summary.totals.located_validators_excluding_providers,
                summary.totals.micro_precision,
                summary.totals.micro_recall
            );
            if let Some(agreement) = &summary.agreement {
                println!(
                    "observers agree: exact {:.4}, overlap {:.4}",
                    agreement.exact_match_rate, agreement.mean_overlap
                );
            }
            println!("{}", run_dir.join("summary.toml").display());
        }
    }
    Ok(())
}

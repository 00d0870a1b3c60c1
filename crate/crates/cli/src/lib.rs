//! Command-line front end: configuration loading, the four subcommands and
//! their reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use variance_forge_core::perturb::{FactorKind, PNorm};
use variance_forge_core::search::EngineKind;
use variance_forge_core::{Error, ErrorCategory, Result};

use crate::commands::CheckArgs;
use crate::config::{BudgetSpec, ExperimentConfig};
use crate::report::RunReport;

#[derive(Debug, Parser)]
#[command(
    name = "variance-forge",
    version,
    about = "Search perturbation strategies that most degrade a classifier"
)]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `engine`.
    #[arg(long, global = true)]
    pub engine: Option<EngineKind>,
    /// Overrides `budget.max_evaluations`.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the unperturbed model and report its accuracy and C-CDD.
    Baseline,
    /// Evaluate every on/off combination of a few factors.
    Grid {
        /// Comma-separated factor codes, e.g. F1,F3,F5.
        #[arg(long, value_delimiter = ',')]
        factors: Option<Vec<FactorKind>>,
    },
    /// Run the configured search engine.
    Search,
    /// Test the robustness conditions for one strategy.
    Check(CheckCli),
}

#[derive(Debug, Args)]
pub struct CheckCli {
    /// Strategy encoding, e.g. 2-0-1.
    #[arg(long)]
    pub strategy: String,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eta: f64,
    /// Norm order: a number >= 1 or `inf`.
    #[arg(long, default_value = "inf")]
    pub p: PNorm,
}

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Runtime => 4,
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(engine) = cli.engine {
        cfg.engine = engine;
    }
    if let Some(n) = cli.budget {
        let max_iterations = cfg.budget.as_ref().and_then(|b| b.max_iterations);
        cfg.budget = Some(BudgetSpec {
            max_evaluations: n,
            max_iterations,
        });
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the selected command and returns its report together with the text
/// to print on stdout.
pub fn run(cli: &Cli) -> Result<(RunReport, String)> {
    let cfg = load_config(cli)?;
    let report = match &cli.command {
        Command::Baseline => commands::cmd_baseline(&cfg)?,
        Command::Grid { factors } => commands::cmd_grid(&cfg, factors.clone())?,
        Command::Search => commands::cmd_search(&cfg)?,
        Command::Check(c) => commands::cmd_check(
            &cfg,
            &CheckArgs {
                strategy: c.strategy.clone(),
                sigma: c.sigma,
                delta: c.delta,
                eta: c.eta,
                norm: c.p,
            },
        )?,
    };
    let text = match &report.check {
        // Per-sample verdicts stay in summary.json.
        Some(check) => {
            let mut brief = check.clone();
            brief.test.samples.clear();
            serde_json::to_string_pretty(&brief)? + "\n"
        }
        None => report::render(&report),
    };
    Ok((report, text))
}

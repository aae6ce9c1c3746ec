//! Command-line front end for the multi-species SK toolkit.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use crate::config::load_config;
use crate::report::RunReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    BetaC,
    SolveQ,
    Sensitivity,
    Oracle,
    Mcmc,
    TapCheck,
    TapIterate,
    CavityCheck,
    Concentration,
    ScalingStudy,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "msk-tap",
    version,
    about = "Multi-species SK model: order parameters, Gibbs averages and TAP checks"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed; drawn from OS entropy when neither is given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV output path; the JSON report goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also emit the JSON report (to stdout when `--out` is absent).
    #[arg(long)]
    pub json: bool,
    /// Print the job plan without computing (scaling-study only).
    #[arg(long)]
    pub dry_run: bool,
}

/// Loads the configuration, runs the command and assembles the report.
pub fn run(cli: &Cli) -> Result<RunReport> {
    let mut config = load_config(&cli.config)?;
    let seed = cli.seed.or(config.seed).unwrap_or_else(rand::random);
    config.seed = Some(seed);
    let start = Instant::now();
    let out = commands::dispatch(cli.command, &config, seed, cli.dry_run)
        .with_context(|| format!("{} failed", cli.command.name()))?;
    Ok(RunReport {
        version: VERSION.to_string(),
        command: cli.command.name(),
        config_sha256: config.hash(),
        config,
        seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        tables: out.tables,
        summary: out.summary,
    })
}

/// Writes CSV (file or stdout) and the optional JSON report.
pub fn emit(cli: &Cli, report: &RunReport) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            report.write_csv(std::io::BufWriter::new(file))?;
            if cli.json {
                let json_path = path.with_extension("json");
                let file = std::fs::File::create(&json_path)
                    .with_context(|| format!("creating {}", json_path.display()))?;
                report.write_json(std::io::BufWriter::new(file))?;
            }
        }
        None if cli.json => report.write_json(std::io::stdout().lock())?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

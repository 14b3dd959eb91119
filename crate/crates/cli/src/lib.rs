//! Command-line pipeline over the `ctrlplace` library: convergence sweep,
//! partition-count choice, demand profiling, placement, and simulation.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Outcome;
pub use config::{Config, SCHEMA_VERSION};
pub use error::CliError;
pub use report::{ReportWriter, RunManifest};

use commands::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "ctrlplace", version, about = "Control-plane placement optimizer and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file; `compare` takes two. Reference defaults when omitted.
    #[arg(long, global = true)]
    pub config: Vec<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for reports.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Largest slice count handed to the exact solver.
    #[arg(long, global = true)]
    pub exact_ceiling: Option<usize>,
    /// Worker threads for sweeps; all cores by default.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample link failures per partition count and pick the best count.
    SweepConvergence,
    /// Place the profiled slices (or a graph file) on servers.
    Place,
    /// Simulate one partition under the configured layout.
    Simulate,
    /// Simulate two configs and tabulate the headline differences.
    Compare,
    /// Print the calibrated resource demands.
    Profile,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SweepConvergence => "sweep-convergence",
            Command::Place => "place",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Profile => "profile",
        }
    }
}

/// Runs one subcommand to completion.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let expected = if cli.command == Command::Compare { 2 } else { 1 };
    if cli.config.len() > expected || (cli.command == Command::Compare && cli.config.len() != 2) {
        return Err(CliError::Config(format!(
            "{} takes {} --config file(s), got {}",
            cli.command.name(),
            if expected == 2 { "exactly two" } else { "at most one" },
            cli.config.len()
        )));
    }
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    let configs = if cli.config.is_empty() {
        vec![Config::default()]
    } else {
        cli.config.iter().map(|p| Config::load(p)).collect::<Result<Vec<_>, _>>()?
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(error::internal)?;
    pool.install(|| dispatch(cli, &configs))
}

fn dispatch(cli: &Cli, configs: &[Config]) -> Result<Outcome, CliError> {
    let seed = cli.seed.unwrap_or(configs[0].seed);
    let manifest = RunManifest::new(&cli.config, seed, cli.command.name(), &cli.out);
    let pipe = Pipeline::new(&configs[0], seed)?;
    let mut out = ReportWriter::create(&cli.out)?;
    let result = match cli.command {
        Command::SweepConvergence => commands::sweep_convergence(&pipe, &manifest, &mut out),
        Command::Profile => commands::profile(&pipe, &manifest, &mut out),
        Command::Place => {
            let ceiling = cli.exact_ceiling.unwrap_or(configs[0].placement.exact_ceiling);
            commands::place_cmd(&pipe, &manifest, ceiling, &mut out)
        }
        Command::Simulate => commands::simulate_cmd(&pipe, &manifest, &mut out),
        Command::Compare => {
            let other = Pipeline::new(&configs[1], cli.seed.unwrap_or(configs[1].seed))?;
            commands::compare_cmd(&pipe, &other, &manifest, &mut out)
        }
    };
    let summary = result?;
    Ok(Outcome {
        files: out.into_written(),
        summary,
    })
}

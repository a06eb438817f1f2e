mod bundle;
mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tna::Scaling;

use crate::commands::Run;
use crate::config::AnalysisConfig;
use crate::error::CliError;

/// Transition network analysis of coded event logs.
#[derive(Debug, Parser)]
#[command(name = "tna", version)]
struct Cli {
    /// TOML analysis config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; each command writes into a subdirectory named after it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// stochastic, frequency or count.
    #[arg(long, global = true, value_parser = parse_scaling)]
    scaling: Option<Scaling>,
    /// Worker threads for resampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, sessionize and estimate the transition model.
    Estimate,
    /// Centralities, dyads, cliques and communities.
    Analyze {
        /// Take the model from an `estimate` bundle instead of the data.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        dyad_threshold: Option<f64>,
        #[arg(long)]
        clique_threshold: Option<f64>,
    },
    /// Mixture Markov clustering with BIC selection.
    Cluster {
        #[arg(long)]
        restarts: Option<usize>,
        /// Smallest and largest number of clusters.
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
        k_range: Option<Vec<usize>>,
    },
    /// Bootstrap, disparity filter and centrality stability.
    Validate {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Subtraction network and permutation test between two groups.
    Compare {
        #[arg(long)]
        group_column: Option<String>,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Synthetic event log from the `[simulate]` section.
    Simulate,
    /// Re-check a bundle directory for internal consistency.
    Verify { path: PathBuf },
}

fn parse_scaling(s: &str) -> Result<Scaling, String> {
    s.parse().map_err(|e: tna::TnaError| e.to_string())
}

fn load_config(cli: &Cli) -> Result<AnalysisConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    if !path.is_file() {
        return Err(CliError::Config(format!("config file not found: {}", path.display())));
    }
    let mut cfg = AnalysisConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = cli.scaling {
        cfg.scaling = s;
    }
    match &cli.command {
        Command::Analyze {
            dyad_threshold,
            clique_threshold,
            ..
        } => {
            cfg.patterns.dyad_threshold = dyad_threshold.unwrap_or(cfg.patterns.dyad_threshold);
            cfg.patterns.clique_threshold = clique_threshold.unwrap_or(cfg.patterns.clique_threshold);
        }
        Command::Cluster { restarts, k_range } => {
            cfg.mixture.restarts = restarts.unwrap_or(cfg.mixture.restarts);
            if let Some(k) = k_range {
                cfg.mixture.k_range = [k[0], k[1]];
            }
        }
        Command::Validate { replicates } => {
            cfg.validation.replicates = replicates.unwrap_or(cfg.validation.replicates);
        }
        Command::Compare {
            group_column,
            permutations,
        } => {
            if group_column.is_some() {
                cfg.compare.group_column = group_column.clone();
            }
            cfg.compare.permutations = permutations.unwrap_or(cfg.compare.permutations);
        }
        Command::Estimate | Command::Simulate | Command::Verify { .. } => {}
    }
    cfg.communities.seed = tna::par::task_seed(cfg.seed, "communities");
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if let Command::Verify { path } = &cli.command {
        let n = verify::verify(path)?;
        println!("{}: {n} checks passed", path.display());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    let dir = match &cli.command {
        Command::Estimate => commands::cmd_estimate(Run::new("estimate", cfg))?,
        Command::Analyze { bundle, .. } => commands::cmd_analyze(Run::new("analyze", cfg), bundle.as_deref())?,
        Command::Cluster { .. } => commands::cmd_cluster(Run::new("cluster", cfg))?,
        Command::Validate { .. } => commands::cmd_validate(Run::new("validate", cfg))?,
        Command::Compare { .. } => commands::cmd_compare(Run::new("compare", cfg))?,
        Command::Simulate => commands::cmd_simulate(Run::new("simulate", cfg))?,
        Command::Verify { .. } => unreachable!("handled above"),
    };
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

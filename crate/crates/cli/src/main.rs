use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use synccert::{Execution, NuMode};
use synccert_cli::commands::{self, Axis, CliError, Outcome, ReproduceArgs, SimulateArgs};
use synccert_cli::config::{self, NetworkConfig};

#[derive(Parser)]
#[command(name = "synccert", version, about = "Certify and simulate synchronisation of coupled Goodwin oscillators")]
struct Cli {
    /// Evaluate grids and slope samples on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Uniform,
    PerEdge,
}

#[derive(Subcommand)]
enum Command {
    /// Edge margins, Q eigenvalue and gain bound for a network config.
    Certify {
        config: PathBuf,
        /// Directory for margin.csv and certificate.json.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate the network and write trace.csv.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Add per-edge X, V, W columns.
        #[arg(long)]
        full: bool,
        /// Check the certified gain bound at every sample.
        #[arg(long)]
        check_bound: bool,
        /// Check the network dissipativity inequality at every sample.
        #[arg(long)]
        check_lemma1: bool,
        /// Overrides every disturbance seed (and SYNC_CERT_SEED).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon.
        #[arg(short = 'T', long = "horizon")]
        horizon: Option<f64>,
    },
    /// Grid search over (theta, theta3) maximising the minimum edge margin.
    Search {
        config: PathBuf,
        /// lo:hi:n
        #[arg(long, allow_hyphen_values = true)]
        theta: Axis,
        /// lo:hi:n
        #[arg(long, allow_hyphen_values = true)]
        theta3: Axis,
        /// Directory for search.csv; prints the grid when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Degrees, neighbour counts and incidence matrix of the config's graph.
    GraphStats { config: PathBuf },
    /// Certify and simulate the bundled five-node example and check every
    /// reference value.
    ReproducePaper {
        /// Use this config instead of the bundled one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &std::path::Path) -> Result<NetworkConfig, CliError> {
    Ok(config::parse_config(path)?)
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Certify { config, out } => commands::cmd_certify(&load(&config)?, out.as_deref(), exec),
        Command::Simulate { config, out, full, check_bound, check_lemma1, seed, dt, horizon } => {
            let args = SimulateArgs { full, check_bound, check_lemma1, seed, dt, horizon };
            commands::cmd_simulate(&load(&config)?, &out, &args, exec)
        }
        Command::Search { config, theta, theta3, out } => {
            commands::cmd_search(&load(&config)?, theta, theta3, out.as_deref(), exec)
        }
        Command::GraphStats { config } => commands::cmd_graph_stats(&load(&config)?),
        Command::ReproducePaper { config, mode, dt, seed, out } => {
            let cfg = match config {
                Some(p) => load(&p)?,
                None => config::parse_str(synccert_cli::BUNDLED_K5)?,
            };
            let mode = mode.map(|m| match m {
                Mode::Uniform => NuMode::UniformWorstCase,
                Mode::PerEdge => NuMode::PerEdge,
            });
            commands::cmd_reproduce(&cfg, &ReproduceArgs { mode, dt, seed, out }, exec)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}

//! `vvo`: two-stage stochastic Volt-VAR optimization studies from the
//! command line. Subcommands cover feeder validation, scenario and
//! training-data generation, surrogate training, exact and neural solves,
//! benchmarking, and report generation.

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "vvo", version, about = "Two-stage stochastic Volt-VAR optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feeder file utilities.
    Feeder {
        #[command(subcommand)]
        command: FeederCommand,
    },
    /// Scenario, profile, and training-sample generation.
    Datagen {
        #[command(subcommand)]
        command: DatagenCommand,
    },
    /// Train the recourse-cost surrogate on a dataset directory.
    Train(TrainArgs),
    /// Solve a VVO instance exactly or through the neural surrogate.
    Solve(SolveArgs),
    /// Run the benchmark protocol over generated instances.
    Bench(BenchArgs),
    /// Aggregate a benchmark CSV and emit incumbent traces.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum FeederCommand {
    /// Parse and validate a feeder document; exit nonzero on violations.
    Validate {
        #[arg(long)]
        feeder: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatagenCommand {
    /// Synthesize smooth base profiles for a feeder (starter CSV).
    Profiles(ProfilesArgs),
    /// Sample perturbed scenarios around base profiles.
    Scenarios(ScenariosArgs),
    /// Generate labeled training samples.
    Samples(SamplesArgs),
}

#[derive(clap::Args)]
struct ProfilesArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    /// Peak load per load bus and phase, kW.
    #[arg(long, default_value_t = 40.0)]
    load_peak_kw: f64,
    /// PV availability peak as a fraction of DER capacity.
    #[arg(long, default_value_t = 1.0)]
    pv_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ScenariosArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    perturbation: f64,
    /// Output path stem (writes <stem>.csv and <stem>.manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SampleModeArg {
    Exact,
    Accelerated,
}

#[derive(clap::Args)]
struct SamplesArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum)]
    mode: SampleModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    scenarios_per_instance: usize,
    #[arg(long, default_value_t = 0.2)]
    perturbation: f64,
    /// First-stage perturbation radius fraction (accelerated mode).
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    feeder: PathBuf,
    /// Dataset directory produced by `datagen samples`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the per-epoch loss curve next to the weights.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMode {
    Exact,
    Neural,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    mode: SolveMode,
    #[arg(long)]
    feeder: PathBuf,
    /// Scenario set path stem (as written by `datagen scenarios`).
    #[arg(long)]
    scenarios: PathBuf,
    /// Trained weights (required for neural mode).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    /// Number of benchmark instances per scenario count.
    #[arg(long, default_value_t = 5)]
    instances: usize,
    /// Comma-separated scenario counts, e.g. 10,50.
    #[arg(long, default_value = "10")]
    scenario_counts: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    perturbation: f64,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-run incumbent traces.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Benchmark CSV produced by `vvo bench`.
    #[arg(long)]
    bench: PathBuf,
    /// Trace directory produced by `vvo bench --traces`.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Feeder {
            command: FeederCommand::Validate { feeder },
        } => commands::feeder_validate(&feeder),
        Command::Datagen { command } => match command {
            DatagenCommand::Profiles(args) => commands::datagen_profiles(&args),
            DatagenCommand::Scenarios(args) => commands::datagen_scenarios(&args),
            DatagenCommand::Samples(args) => commands::datagen_samples(&args),
        },
        Command::Train(args) => commands::train(&args),
        Command::Solve(args) => commands::solve(&args),
        Command::Bench(args) => commands::bench(&args),
        Command::Report(args) => commands::report(&args),
    }
}

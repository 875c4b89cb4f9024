mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CmdError;
use crate::config::Preset;

/// STL + moving-blocks bootstrap augmentation, training and benchmarks.
#[derive(Debug, Parser)]
#[command(name = "ondat", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "ONDAT_SEED")]
    seed: Option<u64>,
    /// Worker threads for library-internal parallelism.
    #[arg(long, global = true, env = "ONDAT_JOBS")]
    jobs: Option<usize>,
    /// Default model size and step budget.
    #[arg(long, global = true, env = "ONDAT_PRESET", value_enum)]
    preset: Option<Preset>,
    /// -v for progress, -vv for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write idx,trend,seasonal,remainder per series.
    Decompose(DecomposeArgs),
    /// Write originals plus synthetic copies.
    Augment(AugmentArgs),
    /// Fit one model and score it on the test block.
    Train(TrainArgs),
    /// Run an experiment file and write the report tables.
    Benchmark(BenchmarkArgs),
    /// Re-summarise a saved report.json.
    Report(ReportArgs),
    /// Write a generated seasonal corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Long CSV with columns unique_id,ds,y.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short = 'm')]
    pub period: usize,
    /// Directory for one <id>.csv per series.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Only these series.
    #[arg(long = "id")]
    pub ids: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short = 'm')]
    pub period: usize,
    #[arg(long, short)]
    pub output: PathBuf,
    /// mbb, fixed or identity.
    #[arg(long, default_value = "mbb")]
    pub method: String,
    /// MBB block length (defaults to the period).
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Synthetic copies per series.
    #[arg(long, default_value_t = 1)]
    pub multiplicity: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short = 'm')]
    pub period: usize,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub input_size: usize,
    #[arg(long, default_value = "ondat", env = "ONDAT_STRATEGY")]
    pub strategy: String,
    /// Directory for checkpoint.json, train_log.jsonl and forecasts.csv.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, env = "ONDAT_MAX_STEPS")]
    pub max_steps: Option<u64>,
    #[arg(long, env = "ONDAT_HIDDEN_UNITS")]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Experiment TOML file.
    pub config: PathBuf,
    /// Overrides output_dir from the file.
    #[arg(long, env = "ONDAT_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `benchmark`.
    pub report: PathBuf,
    #[arg(long)]
    pub timing_reference: Option<String>,
    /// Rewrite the table files into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_series: usize,
    #[arg(long, default_value_t = 120)]
    pub length: usize,
    #[arg(long, short = 'm', default_value_t = 12)]
    pub period: usize,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
}

fn run(cli: Cli) -> Result<(), CmdError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CmdError::usage("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CmdError::Runtime(e.into()))?;
    }
    let g = Globals {
        seed: cli.seed,
        preset: cli.preset,
    };
    match cli.command {
        Command::Decompose(a) => commands::decompose(&a),
        Command::Augment(a) => commands::augment(&a, g),
        Command::Train(a) => commands::train(&a, g),
        Command::Benchmark(a) => commands::benchmark(&a, g),
        Command::Report(a) => commands::report(&a),
        Command::Synth(a) => commands::synth(&a, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use unimf::evaluation::ErrorUnit;
use unimf::factorization::GroupUpdate;
use unimf::{Axis, Error, ModelKind, MovieLensFormat, Scenario, Strategy};

mod commands;

/// Unified matrix factorization for personalized, group, package and
/// package-to-group recommendation.
#[derive(Parser, Debug)]
#[command(name = "unimf", version, about)]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a ratings file and print its shape.
    Load {
        #[command(flatten)]
        data: DataArgs,
        /// Also write the parsed ratings as a tab-separated snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral clustering of users or items; writes `entity_id,cluster_id`.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "users")]
        axis: Axis,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster and split for one scenario; writes train.data, test.csv and
    /// the partitions into a directory.
    Split(SplitArgs),
    /// Train one model on a split directory.
    Train(TrainArgs),
    /// Predict the test cells of a split directory.
    Predict(PredictArgs),
    /// MAE, RMSE and Precision@k of a predictions CSV.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = unimf::evaluation::DEFAULT_RELEVANCE)]
        relevance_threshold: f64,
        /// Write the report as results.csv rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full grid search: cluster, split, train, predict and evaluate every
    /// (lambda, gamma) cell over several seeded runs.
    Grid(Box<GridArgs>),
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "ml100k")]
    format: MovieLensFormat,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    scenario: Scenario,
    /// User groups (default 20, or n/8 for p2g).
    #[arg(long)]
    k1: Option<usize>,
    /// Item packages (default 20, or m/4 for p2g).
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training share of the personalized protocol.
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory written by `split`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    model: ModelKind,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    group_update: Option<GroupUpdate>,
    /// Model file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    split: PathBuf,
    /// Model file written by `train`.
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value = "latent-factor")]
    strategy: Strategy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// TOML experiment config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<MovieLensFormat>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    model: Option<ModelKind>,
    /// Strategies to evaluate (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    /// `paper`, `coarse`, `baseline` or a comma-separated list.
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Use the coarse grid for whichever grid is not given explicitly.
    #[arg(long)]
    coarse: bool,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    relevance_threshold: Option<f64>,
    #[arg(long)]
    error_unit: Option<ErrorUnit>,
    #[arg(long)]
    group_update: Option<GroupUpdate>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Keep every trained model, not only the winners.
    #[arg(long)]
    save_models: bool,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::InvalidArgument(_) | Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Load { data, out } => commands::load(&data, out.as_deref()),
        Command::Cluster {
            data,
            axis,
            k,
            seed,
            out,
        } => commands::cluster(&data, axis, k, seed, &out),
        Command::Split(args) => commands::split(&args),
        Command::Train(args) => commands::train(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Evaluate {
            predictions,
            relevance_threshold,
            out,
        } => commands::evaluate(&predictions, relevance_threshold, out.as_deref()),
        Command::Grid(args) => commands::grid(&args),
    };
    match result {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

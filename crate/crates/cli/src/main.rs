//! `sc`: decompositions, circuit fits and cross-validated classifiers from
//! the command line. Every output file starts with the resolved
//! configuration so a result can be traced back to the run that made it.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use schmidt_circuits::Error;

#[derive(Debug, Parser)]
#[command(name = "sc", version, about = "Tensor-network structured circuits for data compression")]
struct Cli {
    /// TOML or JSON file of option defaults; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose the mean vector of a random subset and write its coefficients.
    Decompose(DecomposeArgs),
    /// Train the circuit to reproduce k-term approximations.
    FitCircuit(FitArgs),
    /// Cross-validate the classifier head on original or reduced vectors.
    TrainClassical(TrainArgs),
    /// Cross-validate the joint circuit + classifier model.
    TrainHybrid(TrainArgs),
    /// Print learnable parameter counts.
    CountParams(CountArgs),
    /// Write a synthetic classification dataset as CSV.
    GenData(GenArgs),
}

/// Where the samples come from: a registered name or a CSV path.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// Dataset name (iris, wine, ...) or path to a CSV file.
    #[arg(long)]
    pub data: Option<String>,
    /// Label column of a CSV file.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Qubit count for a CSV file (default ceil(log2 features)).
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Standardise every feature before normalisation.
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Rows averaged into the mean vector.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Term count (default: the dataset's registered value, else chosen with --gamma).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fit one vector instead of a sample.
    #[arg(long, conflicts_with = "sample")]
    pub single: bool,
    /// Vectors in the fitted sample.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// original | reduced (train-classical only).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feed reduced vectors without rescaling them to unit norm.
    #[arg(long)]
    pub no_renormalize: bool,
    /// Keep circuit angles at their initial values.
    #[arg(long)]
    pub freeze_quantum: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CountArgs {
    /// Dataset name, or `all` for the six classification datasets.
    #[arg(long)]
    pub data: Option<String>,
    /// hybrid | classical-original | classical-reduced
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GenArgs {
    /// Qubits; the data has 2^n features.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub informative: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let usage = error.chain().any(|e| {
            matches!(
                e.downcast_ref::<Error>(),
                Some(Error::UnknownDataset { .. } | Error::InvalidArgument(_) | Error::NotClassification(_))
            )
        });
        Failure { code: if usage { 2 } else { 1 }, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, error: anyhow::anyhow!(msg.into()) }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => Some(config::read(path)?),
        None => None,
    };
    let file = file.as_ref();
    match cli.command {
        Command::Decompose(a) => commands::decompose(config::merge(&a, file, "decompose")?),
        Command::FitCircuit(a) => commands::fit_circuit(config::merge(&a, file, "fit-circuit")?),
        Command::TrainClassical(a) => commands::train(config::merge(&a, file, "train-classical")?, false),
        Command::TrainHybrid(a) => commands::train(config::merge(&a, file, "train-hybrid")?, true),
        Command::CountParams(a) => commands::count_params(config::merge(&a, file, "count-params")?),
        Command::GenData(a) => commands::gen_data(config::merge(&a, file, "gen-data")?),
    }
}

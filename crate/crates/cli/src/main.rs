//! `eids`: ingest UNSW-NB15, select features, train and evaluate the
//! CNN-BiLSTM detector and its baselines.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use error::EXIT_CONFIG;

#[derive(Parser, Debug)]
#[command(
    name = "eids",
    version,
    about = "Lightweight CNN-BiLSTM intrusion detection on UNSW-NB15",
    after_help = "Exit codes: 0 success, 2 I/O error, 3 contract or shape error, 4 config error.\n\
                  The dataset directory may be given with the EIDS_DATA_DIR environment variable."
)]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for caches, models and reports [default: eids-out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for every random draw [default: 42]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse the train/test CSVs, fit the encoder and cache both frames
    Ingest(IngestArgs),
    /// Score features with chi-square and write the top-k mask
    Select(SelectArgs),
    /// Train the CNN-BiLSTM on the cached, masked training frame
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline on the cached test frame
    Eval(EvalArgs),
    /// Write per-row predictions of a checkpoint
    Predict(PredictArgs),
    /// Time repeated full-test-set inference passes
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Binary,
    Multi,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Features,
    Channels,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Logistic,
    Knn,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Training CSV [default: $EIDS_DATA_DIR/UNSW_NB15_training-set.csv]
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Test CSV [default: $EIDS_DATA_DIR/UNSW_NB15_testing-set.csv]
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Number of features to keep [default: 20]
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Label view the scores are computed against [default: multi]
    #[arg(long, value_enum, value_name = "VIEW")]
    pub label_view: Option<TaskArg>,
    /// Exclude the ordinal-encoded proto/service/state columns [default: off]
    #[arg(long)]
    pub numeric_only: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Detection task [default: binary]
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Adam learning rate [default: 0.001 binary, 0.01 multi]
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    /// Training epochs [default: 15 binary, 30 multi]
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 256 binary, 128 multi]
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Weight the loss by inverse class frequency [default: false binary, true multi]
    #[arg(long, value_name = "BOOL")]
    pub class_weights: Option<bool>,
    /// Share of training rows held out for per-epoch validation [default: 0]
    #[arg(long, value_name = "FRACTION")]
    pub validation_fraction: Option<f64>,
    /// Input layout: features as the sequence, or one step with the features as channels [default: features]
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Convolution filters [default: 32]
    #[arg(long, value_name = "N")]
    pub conv_filters: Option<usize>,
    /// Convolution kernel width, odd [default: 3]
    #[arg(long, value_name = "N")]
    pub conv_kernel: Option<usize>,
    /// LSTM hidden units per direction [default: 32]
    #[arg(long, value_name = "N")]
    pub lstm_hidden: Option<usize>,
    /// Dense layer units [default: 64]
    #[arg(long, value_name = "N")]
    pub dense_units: Option<usize>,
    /// Dropout rate before the head [default: 0.3]
    #[arg(long, value_name = "RATE")]
    pub dropout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model checkpoint [default: <out>/model.eidm]
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Task to evaluate; must match the checkpoint head [default: the checkpoint's]
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Evaluate a baseline instead of a checkpoint
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Neighbours for the k-NN baseline [default: 5]
    #[arg(long, value_name = "K")]
    pub knn_k: Option<usize>,
    /// Baselines use all features instead of the selection mask [default: off]
    #[arg(long)]
    pub all_features: bool,
    /// Report formats to write, comma separated [default: json,csv,text]
    #[arg(long, value_enum, value_delimiter = ',', value_name = "FORMATS")]
    pub format: Option<Vec<FormatArg>>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model checkpoint [default: <out>/model.eidm]
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Cached frame to score [default: <out>/test.eids]
    #[arg(long, value_name = "PATH", conflicts_with = "csv")]
    pub input: Option<PathBuf>,
    /// Raw UNSW-NB15 CSV to score with <out>/encoder.json
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Predictions file [default: <out>/predictions.csv]
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Model checkpoint [default: <out>/model.eidm]
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Timed passes over the full test frame
    #[arg(long, value_name = "R", default_value_t = 5)]
    pub repeat: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

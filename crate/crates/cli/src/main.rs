//! `docspan` command-line entry point.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use docspan::model::ModelKind;

/// Exit statuses.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
/// A `--threshold-micro` (or config threshold) was not met.
pub const EXIT_THRESHOLD: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "docspan", version, about = "Span extraction for visually-rich documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus as JSON-lines files.
    GenData(GenDataArgs),
    /// Convert a CORD checkout to JSON-lines.
    ImportCord(ImportCordArgs),
    /// Span pre-training over the config's `data.pretrain` datasets.
    Pretrain(RunArgs),
    /// Fine-tune on `data.train`, selecting the best epoch on `data.dev`.
    Train(RunArgs),
    /// Score checkpoints on a dataset and write a comparison report.
    Eval(EvalArgs),
    /// Write predicted entities for every document.
    Decode(DecodeArgs),
    /// Render documents with their predicted (or gold) chains as SVG.
    Visualize(VisualizeArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Generator config (TOML). Mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in corpus: receipts, invoices or rare-fields.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Split sizes for presets.
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 50)]
    dev: usize,
    #[arg(long, default_value_t = 50)]
    test: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ImportCordArgs {
    /// CORD root containing train/, dev/ and test/.
    #[arg(long)]
    root: PathBuf,
    /// Only this split (default: all three).
    #[arg(long)]
    split: Option<String>,
    #[arg(long, requires = "page_height")]
    page_width: Option<u32>,
    #[arg(long, requires = "page_width")]
    page_height: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from this checkpoint's encoder, head and queries.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    #[arg(long)]
    threshold_micro: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// One or more checkpoints; each becomes a report row.
    #[arg(long = "checkpoint", required_unless_present = "gold")]
    checkpoints: Vec<PathBuf>,
    /// Dataset file (JSON-lines). Alternatively --config with --split.
    #[arg(long, conflicts_with = "config")]
    data: Option<PathBuf>,
    #[arg(long, requires = "split")]
    config: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Expected model type; a mismatching checkpoint is an error.
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    /// Add a row scoring the gold annotations against themselves.
    #[arg(long)]
    gold: bool,
    #[arg(long)]
    threshold_micro: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VisualizeArgs {
    /// Without a checkpoint the gold chains are drawn.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Render only this document.
    #[arg(long)]
    doc_id: Option<String>,
    /// SVG width in pixels.
    #[arg(long, default_value_t = 800.0)]
    width: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: docspan::Error| e.to_string())
}

/// A failed command with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<docspan::Error> for Failure {
    fn from(e: docspan::Error) -> Self {
        let code = if e.is_numeric() {
            EXIT_NUMERIC
        } else if e.is_data_error() {
            EXIT_DATA
        } else {
            EXIT_USAGE
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::ImportCord(a) => commands::import_cord(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Decode(a) => commands::decode(a),
        Command::Visualize(a) => commands::visualize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

//! `arc`: preprocessing, dataset splits, training, evaluation, inference
//! and the checkout server.
//!
//! Exit status is 0 on success, 1 on an operational error and 2 on a usage
//! error. Diagnostics go to standard error; machine-readable results are
//! JSON on standard output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "arc", version, about = "Vision-based retail checkout toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the preprocessing pipeline over images.
    Preprocess(PreprocessArgs),
    /// Scan a corpus and write a stratified split manifest.
    Split(SplitArgs),
    /// Train a network from a configuration file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Identify the item in a single image.
    Infer(InferArgs),
    /// Serve the checkout HTTP API.
    Serve(ServeArgs),
    /// Write a generated corpus of coloured shapes.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Pipeline configuration (TOML); defaults cover each whole frame.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Also write the six intermediate stages per image.
    #[arg(long)]
    pub dump_stages: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Catalog JSON; defaults to `<root>/catalog.json`.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_parser = parse_fractions, default_value = "0.65,0.25,0.10")]
    pub fractions: (f64, f64, f64),
    /// Manifest CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub target_val_acc: Option<f64>,
    /// Continue from the state saved in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Pipeline configuration; defaults to `pipeline.toml` beside the checkpoint.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Write the confusion-matrix counts here.
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
    /// Write the row percentages here.
    #[arg(long)]
    pub percent_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Pipeline configuration; defaults to `pipeline.toml` beside the
    /// checkpoint, else the whole frame.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Catalog used to name the candidates.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value_t = arc_checkout::DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, env = "ARC_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "ARC_CATALOG")]
    pub catalog: PathBuf,
    /// Minimum top-1 probability for automatic billing.
    #[arg(long, env = "ARC_TAU", default_value_t = arc_checkout::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, env = "ARC_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: std::net::SocketAddr,
    /// Append-only event log replayed on start.
    #[arg(long, env = "ARC_EVENT_LOG")]
    pub event_log: Option<PathBuf>,
    #[arg(long, env = "ARC_PIPELINE")]
    pub pipeline: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 120)]
    pub height: usize,
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated fractions, got {}", parts.len())),
    }
}

fn echo<T: Serialize>(verb: &str, args: &T) {
    match serde_json::to_string(args) {
        Ok(text) => eprintln!("arc {verb}: {text}"),
        Err(e) => log::warn!("could not echo arguments: {e}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let result = match &cli.command {
        Command::Preprocess(a) => {
            echo("preprocess", a);
            commands::preprocess(a)
        }
        Command::Split(a) => {
            echo("split", a);
            commands::split(a)
        }
        Command::Train(a) => {
            echo("train", a);
            commands::train(a)
        }
        Command::Eval(a) => {
            echo("eval", a);
            commands::eval(a)
        }
        Command::Infer(a) => {
            echo("infer", a);
            commands::infer(a)
        }
        Command::Serve(a) => {
            echo("serve", a);
            commands::serve(a)
        }
        Command::Synth(a) => {
            echo("synth", a);
            commands::synth(a)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

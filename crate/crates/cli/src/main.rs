mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ConfigError;

/// Multi-scale hierarchical networks for one-to-one image relighting.
///
/// Set RELIGHT_THREADS to use more than one thread for convolutions.
/// Results are identical for any thread count.
#[derive(Debug, Parser)]
#[command(name = "relight", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic relighting dataset.
    Synth(SynthArgs),
    /// Train a network with the two-stage schedule.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Relight one image or every PNG in a directory.
    Infer(InferArgs),
    /// Time single and stacked forward passes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    scenes: usize,
    /// Image side in pixels, a multiple of 16.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Subdirectory to write scenes into; empty for the root itself.
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root, overriding `data_root`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` assignments applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    /// Read pairs from this CSV manifest instead of scanning `--data`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write per-sample rows as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// A PNG file or a directory of PNG files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file, or directory when `--in` is a directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Take the network width and seed from this checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Network width when no checkpoint is given.
    #[arg(long, default_value_t = 8)]
    base_channels: usize,
}

fn run(cli: Cli) -> Result<()> {
    commands::configure_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(a.seed, a.scenes, a.size, &a.split, &a.out),
        Command::Train(a) => commands::train(a.config.as_deref(), a.data, a.out, &a.overrides),
        Command::Eval(a) => commands::eval(&a.ckpt, &a.data, &a.split, a.manifest.as_deref(), a.tsv.as_deref()),
        Command::Infer(a) => commands::infer(&a.ckpt, &a.input, &a.out),
        Command::Bench(a) => commands::bench(a.ckpt.as_deref(), a.size, a.repeats, a.base_channels),
    }
}

/// 1 for usage errors, 2 for data errors, 3 for numerical aborts.
fn exit_code(err: &anyhow::Error) -> u8 {
    use relight_core::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFinite { .. } => 3,
                E::InvalidArgument(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

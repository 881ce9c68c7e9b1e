use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tscn_cli::{cmd_embed, cmd_eval, cmd_scatter, cmd_train, EvalOptions};

/// Train, evaluate, and export contrastive 2D image embeddings.
#[derive(Parser)]
#[command(name = "tscn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training protocol described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Embed a dataset with a trained checkpoint and write a CSV.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        /// cifar10:<dir> | cifar100:<dir> | synthetic:seed=<n>[,k=v...]
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the metric report for a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// cifar10:<dir> | cifar100:<dir> | synthetic:seed=<n>[,k=v...]
        #[arg(long)]
        data: String,
        /// Report kNN accuracy for every k in 1..=30.
        #[arg(long)]
        knn_sweep: bool,
        /// Neighbor count when not sweeping.
        #[arg(long, default_value_t = 15)]
        k: usize,
        /// Seed for the loss batches and k-means.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an embedding CSV as an SVG scatter plot.
    Scatter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> tscn_cli::Result<()> {
    match Cli::parse().command {
        Command::Train { config } => cmd_train(&config),
        Command::Embed { checkpoint, data, out } => cmd_embed(&checkpoint, &data, &out),
        Command::Eval { checkpoint, data, knn_sweep, k, seed, out } => {
            let options = EvalOptions { knn_k: k, knn_sweep, seed, out, ..EvalOptions::default() };
            cmd_eval(&checkpoint, &data, &options)
        }
        Command::Scatter { input, out } => cmd_scatter(&input, &out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tscn: {err}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stab_cli::commands::{self, SplitChoice};
use stab_cli::config;

#[derive(Parser)]
#[command(
    name = "stab",
    about = "Stochastic-competition transformer for tabular data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from an experiment config; writes a checkpoint and an
    /// epoch history.
    Train {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --set train.seed=7
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Checkpoint output path (overrides the config).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// History output path (overrides the config).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with Bayesian averaging.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation CSV; defaults to the dataset named in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Rows to evaluate: train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Bayesian sample count (defaults to the model's n_infer).
        #[arg(long)]
        samples: Option<usize>,
        /// Base seed for the sampler streams.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write predictions for a target-less CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input CSV holding the schema's feature columns.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV (single "prediction" column).
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and compare all four variants on one dataset.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn run(cli: Cli) -> stab_core::Result<()> {
    match cli.command {
        Command::Train { config: path, overrides, checkpoint, history } => {
            let cfg = config::load_config(&path, &overrides)?;
            let outcome = commands::cmd_train(&cfg, checkpoint.as_deref(), history.as_deref())?;
            println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
            Ok(())
        }
        Command::Eval { checkpoint, data, split, samples, seed } => {
            let split: SplitChoice = split.parse()?;
            let outcome = commands::cmd_eval(&checkpoint, data.as_deref(), split, samples, seed)?;
            println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
            Ok(())
        }
        Command::Predict { checkpoint, input, output, samples, seed } => {
            let rows = commands::cmd_predict(&checkpoint, &input, &output, samples, seed)?;
            println!("{{\"rows\":{rows},\"output\":{:?}}}", output);
            Ok(())
        }
        Command::Ablate { config: path, overrides } => {
            let cfg = config::load_config(&path, &overrides)?;
            let rows = commands::cmd_ablate(&cfg)?;
            print!("{}", commands::format_ablation_table(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // single-line machine-parseable failure reason
            let msg = err.to_string().replace('\n', " ");
            eprintln!("error:{}: {}", err.kind(), msg);
            ExitCode::FAILURE
        }
    }
}

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "stereokit", version, about = "Stereo disparity networks: data, training, inference and evaluation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic stereograms and a manifest.
    GenData(commands::gen_data::GenDataArgs),
    /// Train a network on a generated or converted dataset.
    Train(commands::train::TrainArgs),
    /// Predict a disparity map for one image pair.
    Infer(commands::infer::InferArgs),
    /// Score estimated disparity maps against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Median forward-pass latency per variant.
    Bench(commands::bench::BenchArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

/// Kernel parallelism shared by all subcommands.
#[derive(Args, Debug, Clone)]
pub struct ThreadArgs {
    /// Worker threads; defaults to STEREOKIT_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn main() -> ExitCode {
    let argv = match config::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(&argv);
    eprintln!("# {}", config::echo(&argv));
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

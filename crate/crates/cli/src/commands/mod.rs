pub mod bench;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod infer;
pub mod train;

use std::process::ExitCode;

use anyhow::{Context, Result};

use crate::Command;

pub const THREADS_ENV: &str = "STEREOKIT_THREADS";

/// Sizes the global worker pool: an explicit count wins, then
/// `STEREOKIT_THREADS`, then `fallback` (all cores when `None`).
pub fn init_threads(explicit: Option<usize>, fallback: Option<usize>) -> Result<()> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .with_context(|| format!("{THREADS_ENV}={v:?} is not a positive integer"))?,
        ),
        Err(_) => None,
    };
    let n = explicit.or(from_env).or(fallback).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring worker threads")
}

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
    }
}

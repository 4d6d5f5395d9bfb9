use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use stereokit::bench::{available_memory, bench_forward, ordering_holds, BenchOutcome};
use stereokit::net::{ModelConfig, Variant};

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "baseline,small,tiny")]
    pub variants: Vec<Variant>,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub max_disparity: usize,
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeat: u64,
    /// Fail unless tiny < small < baseline.
    #[arg(long)]
    pub check: bool,
    /// Use STEREOKIT_THREADS (or all cores) instead of one worker.
    #[arg(long)]
    pub parallel: bool,
    /// Skip variants whose estimated peak exceeds this; defaults to available memory.
    #[arg(long)]
    pub memory_limit_mb: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(a: BenchArgs) -> Result<ExitCode> {
    if a.parallel {
        super::init_threads(None, None)?;
    } else {
        super::init_threads(Some(1), None)?;
    }
    let limit = a.memory_limit_mb.map(|mb| mb << 20).or_else(available_memory);
    println!("variant,height,width,max_disparity,median_ms,status");
    let mut results = Vec::new();
    for &v in &a.variants {
        let config = ModelConfig::new(v, a.height, a.width, a.max_disparity).with_features(a.features);
        let r = bench_forward(config, a.repeat as usize, a.seed, limit).with_context(|| format!("variant {v}"))?;
        let prefix = format!("{v},{},{},{}", a.height, a.width, a.max_disparity);
        match &r.outcome {
            BenchOutcome::Timed { median, .. } => {
                println!("{prefix},{:.3},ok", median.as_secs_f64() * 1e3)
            }
            BenchOutcome::OutOfMemory {
                estimated_bytes,
                limit_bytes,
            } => println!(
                "{prefix},,OOM (needs ~{} MiB of {} MiB)",
                estimated_bytes >> 20,
                limit_bytes >> 20
            ),
        }
        results.push(r);
    }
    if a.check {
        let required = [Variant::Tiny, Variant::Small, Variant::Baseline];
        let all_timed = required
            .iter()
            .all(|v| results.iter().any(|r| r.config.variant == *v && r.median().is_some()));
        if !all_timed || !ordering_holds(&results) {
            eprintln!("check failed: expected tiny < small < baseline with all three timed");
            return Ok(ExitCode::FAILURE);
        }
        eprintln!("check passed: tiny < small < baseline");
    }
    Ok(ExitCode::SUCCESS)
}

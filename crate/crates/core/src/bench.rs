//! Forward-pass latency measurement with an up-front memory estimate.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{cost_volume_shape, Model, ModelConfig, Variant};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum BenchOutcome {
    Timed { median: Duration, runs: Vec<Duration> },
    /// Skipped because the estimated peak exceeds the memory limit.
    OutOfMemory { estimated_bytes: u64, limit_bytes: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub config: ModelConfig,
    pub outcome: BenchOutcome,
}

impl BenchResult {
    pub fn median(&self) -> Option<Duration> {
        match &self.outcome {
            BenchOutcome::Timed { median, .. } => Some(*median),
            BenchOutcome::OutOfMemory { .. } => None,
        }
    }
}

/// Rough peak bytes of one inference pass: the cost volume, the two widest
/// 3D activations live next to it, the full-resolution cost tensor and the
/// feature maps of both towers.
pub fn estimate_peak_bytes(c: &ModelConfig) -> u64 {
    let [d, h, w, ch] = cost_volume_shape(c).map(|v| v as u64);
    let cells = d * h * w;
    let volume = cells * ch;
    let first_3d = cells * c.features as u64 * 2;
    let full = (c.max_disparity * c.height * c.width) as u64;
    let features = 2 * h * w * c.features as u64;
    4 * (volume + 2 * first_3d + 2 * full + 2 * features)
}

/// `MemAvailable` from `/proc/meminfo`, when readable.
pub fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn median(runs: &[Duration]) -> Duration {
    let mut v = runs.to_vec();
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Times `repeat` forward passes of a freshly initialized model on random
/// images after one untimed warm-up pass.
pub fn bench_forward(config: ModelConfig, repeat: usize, seed: u64, memory_limit: Option<u64>) -> Result<BenchResult> {
    if repeat == 0 {
        return Err(Error::Config("repeat must be at least 1".into()));
    }
    config.validate()?;
    let estimated = estimate_peak_bytes(&config);
    if let Some(limit) = memory_limit {
        if estimated > limit {
            return Ok(BenchResult {
                config,
                outcome: BenchOutcome::OutOfMemory {
                    estimated_bytes: estimated,
                    limit_bytes: limit,
                },
            });
        }
    }
    let model: Model = Model::build(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [config.height, config.width, config.channels];
    let left = Tensor::from_fn(&shape, |_| rng.gen::<f32>());
    let right = Tensor::from_fn(&shape, |_| rng.gen::<f32>());
    model.infer(&left, &right)?;
    let mut runs = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        std::hint::black_box(model.infer(&left, &right)?);
        runs.push(t.elapsed());
    }
    Ok(BenchResult {
        config,
        outcome: BenchOutcome::Timed {
            median: median(&runs),
            runs,
        },
    })
}

/// `tiny < small < baseline` over whichever of the three were timed.
pub fn ordering_holds(results: &[BenchResult]) -> bool {
    let get = |v: Variant| results.iter().find(|r| r.config.variant == v).and_then(BenchResult::median);
    let timed: Vec<Duration> = [Variant::Tiny, Variant::Small, Variant::Baseline]
        .into_iter()
        .filter_map(get)
        .collect();
    timed.windows(2).all(|p| p[0] < p[1])
}

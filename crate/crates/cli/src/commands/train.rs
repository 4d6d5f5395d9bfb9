use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use stereokit::io::dataset::{load_dataset, GroundTruth};
use stereokit::losses::{LossWeights, Mode};
use stereokit::net::{Model, ModelConfig, Variant};
use stereokit::train::{self, load_checkpoint, Schedule, TrainOptions, Trainer, LOG_HEADER};

use crate::ThreadArgs;

pub const LOG_FILE: &str = "train.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroundTruthChoice {
    /// 5% subsample emulating lidar (`lidar_*.pgm16`).
    Sparse,
    /// Every valid pixel (`disp_*.pgm16`).
    Dense,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = Variant::Tiny)]
    pub variant: Variant,
    /// lidar, photo or lidar_photo.
    #[arg(long, default_value_t = Mode::LidarPhoto)]
    pub mode: Mode,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    /// Dataset root holding `manifest.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `checkpoint.sdnn` and `train.log`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_disparity: usize,
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Keep the learning rate constant instead of halving it at 1/3 and 2/3.
    #[arg(long)]
    pub constant_lr: bool,
    /// Weight initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: u64,
    #[arg(long, value_enum, default_value_t = GroundTruthChoice::Sparse)]
    pub ground_truth: GroundTruthChoice,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub lambda_image: Option<f64>,
    #[arg(long)]
    pub lambda_lidar: Option<f64>,
    #[arg(long)]
    pub lambda_lr: Option<f64>,
    #[arg(long)]
    pub lambda_smooth: Option<f64>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

impl TrainArgs {
    pub fn weights(&self) -> LossWeights {
        let mut w = LossWeights::for_mode(self.mode);
        let overrides = [
            (&mut w.lambda1, self.lambda_image),
            (&mut w.lambda2, self.lambda_lidar),
            (&mut w.lambda3, self.lambda_lr),
            (&mut w.lambda4, self.lambda_smooth),
        ];
        for (slot, v) in overrides {
            if let Some(v) = v {
                *slot = v;
            }
        }
        w
    }
}

pub fn run(a: TrainArgs) -> Result<ExitCode> {
    super::init_threads(a.threads.threads, None)?;
    let gt = match a.ground_truth {
        GroundTruthChoice::Sparse => GroundTruth::Sparse,
        GroundTruthChoice::Dense => GroundTruth::Dense,
    };
    let data = load_dataset(&a.data, gt).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let Some(first) = data.first() else {
        bail!("dataset {} has no samples", a.data.display());
    };
    let weights = a.weights();
    let schedule = if a.constant_lr {
        Schedule::Constant
    } else {
        Schedule::StepDecay { total_steps: a.steps }
    };
    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            Trainer::resume(ckpt, a.lr, schedule, weights)?
        }
        None => {
            let config = ModelConfig::new(a.variant, first.height(), first.width(), a.max_disparity)
                .with_features(a.features)
                .with_channels(first.left.shape()[2]);
            Trainer::new(Model::build(config, a.seed)?, a.lr, schedule, weights)?
        }
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log_path = a.out.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let args: Vec<_> = std::env::args_os().collect();
    writeln!(log, "# {}", crate::config::echo(&args))?;
    writeln!(log, "# variant={} mode={} config={:?}", trainer.model().config().variant, a.mode, trainer.model().config())?;
    writeln!(log, "{LOG_HEADER}")?;
    let opts = TrainOptions {
        steps: a.steps,
        lr: a.lr,
        schedule,
        weights,
        checkpoint_every: a.checkpoint_every,
        out_dir: Some(a.out.clone()),
    };
    let mut write_err = None;
    let result = train::run(&mut trainer, &data, &opts, |row| {
        if let Err(e) = writeln!(log, "{row}").and_then(|_| log.flush()) {
            write_err.get_or_insert(e);
        }
    });
    log.flush()?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    result?;
    eprintln!(
        "trained {} steps; checkpoint in {}",
        trainer.step_count(),
        a.out.join(train::CHECKPOINT_FILE).display()
    );
    Ok(ExitCode::SUCCESS)
}

//! Adam training loop with checkpointing and a line-oriented log.

pub mod adam;
pub mod checkpoint;

use std::fmt;
use std::path::{Path, PathBuf};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::io::generator::StereoSample;
use crate::losses::{total_loss, LossBreakdown, LossInputs, LossWeights};
use crate::net::{Model, ShapeTrace};

pub use adam::{adam_step, AdamState, Schedule};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_into, save_checkpoint, Checkpoint,
};

pub const LOG_HEADER: &str = "step,total,E_image,E_lidar,E_lr,E_ds,lr";
pub const CHECKPOINT_FILE: &str = "checkpoint.sdnn";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// Zero-based index of the update this row describes.
    pub step: u64,
    pub loss: LossBreakdown,
    pub lr: f64,
}

impl fmt::Display for LogRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.loss;
        write!(
            f,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.6e}",
            self.step, l.total, l.image, l.lidar, l.lr, l.ds, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: u64,
    pub lr: f64,
    pub schedule: Schedule,
    pub weights: LossWeights,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Directory receiving `checkpoint.sdnn`; `None` disables checkpointing.
    pub out_dir: Option<PathBuf>,
}

impl TrainOptions {
    /// Adam at 1e-4 with step decay over `steps`.
    pub fn new(steps: u64, weights: LossWeights) -> Self {
        Self {
            steps,
            lr: 1e-4,
            schedule: Schedule::StepDecay { total_steps: steps },
            weights,
            checkpoint_every: 0,
            out_dir: None,
        }
    }
}

/// Owns the model and optimizer state between steps.
pub struct Trainer {
    model: Model,
    state: AdamState,
    weights: LossWeights,
    step: u64,
}

impl Trainer {
    pub fn new(model: Model, lr: f64, schedule: Schedule, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        let state = AdamState::new(model.params(), lr, schedule);
        Ok(Self {
            model,
            state,
            weights,
            step: 0,
        })
    }

    /// Resumes from a checkpoint; a missing optimizer block starts fresh moments.
    pub fn resume(ckpt: Checkpoint, lr: f64, schedule: Schedule, weights: LossWeights) -> Result<Self> {
        let step = ckpt.step;
        let optimizer = ckpt.optimizer.clone();
        let mut t = Self::new(ckpt.into_model()?, lr, schedule, weights)?;
        if let Some(s) = optimizer {
            if s.m.keys().ne(t.model.params().keys()) || s.v.keys().ne(t.model.params().keys()) {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
            t.state = s;
        }
        t.step = step;
        Ok(t)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.model, self.step, Some(self.state.clone()))
    }

    /// Loss of `sample` under the current parameters, without updating.
    pub fn evaluate_loss(&self, sample: &StereoSample) -> Result<LossBreakdown> {
        let tape = Tape::inference();
        self.loss_on(&tape, sample).map(|(_, b)| b)
    }

    fn loss_on<'t>(
        &self,
        tape: &'t Tape<f32>,
        sample: &StereoSample,
    ) -> Result<(crate::autodiff::Var<'t, f32>, LossBreakdown)> {
        let p = self.model.bind(tape);
        let pred = self.model.forward(
            &p,
            &tape.constant(sample.left.clone()),
            &tape.constant(sample.right.clone()),
            &mut ShapeTrace::disabled(),
        )?;
        let inputs = LossInputs {
            left: &sample.left,
            right: &sample.right,
            gt_left: sample.gt_left.as_ref(),
            gt_right: sample.gt_right.as_ref(),
            max_disparity: self.model.config().max_disparity,
        };
        total_loss(&inputs, &pred.left, pred.right.as_ref(), &self.weights)
    }

    /// One Adam update on one sample. A non-finite loss or gradient leaves
    /// the parameters untouched and returns an error.
    pub fn step(&mut self, sample: &StereoSample) -> Result<LogRow> {
        let lr = self.state.current_lr();
        let tape = Tape::new();
        let (total, loss) = self.loss_on(&tape, sample)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                step: self.step as usize,
                loss: loss.total,
            });
        }
        let grads = tape.backward(&total)?.into_params();
        drop(total);
        match adam_step(self.model.params_mut(), &grads, &mut self.state) {
            Err(Error::NonFiniteGradient(_)) => {
                return Err(Error::Diverged {
                    step: self.step as usize,
                    loss: loss.total,
                })
            }
            r => r?,
        }
        let row = LogRow {
            step: self.step,
            loss,
            lr,
        };
        self.step += 1;
        Ok(row)
    }
}

fn write_checkpoint(dir: &Path, trainer: &Trainer) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &trainer.checkpoint())
}

/// Trains for `opts.steps` updates with batch size 1, visiting `dataset` in
/// order and wrapping around. Each row is passed to `on_row` as it is
/// produced. On divergence the last good checkpoint is kept on disk and
/// `Error::Diverged` is returned.
pub fn train(
    model: Model,
    dataset: &[StereoSample],
    opts: &TrainOptions,
    on_row: impl FnMut(&LogRow),
) -> Result<Model> {
    let mut trainer = Trainer::new(model, opts.lr, opts.schedule, opts.weights)?;
    run(&mut trainer, dataset, opts, on_row)?;
    Ok(trainer.into_model())
}

/// Continues `trainer` for `opts.steps` further updates; the learning rate,
/// schedule and weights already held by the trainer take precedence over
/// those in `opts`.
pub fn run(
    trainer: &mut Trainer,
    dataset: &[StereoSample],
    opts: &TrainOptions,
    mut on_row: impl FnMut(&LogRow),
) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let cfg = *trainer.model().config();
    for s in dataset {
        let want = [cfg.height, cfg.width, cfg.channels];
        if s.left.shape() != want || s.right.shape() != want {
            return Err(Error::Config(format!(
                "sample {} has shape {:?}, model expects {want:?}",
                s.id,
                s.left.shape()
            )));
        }
    }
    let start = trainer.step_count();
    for i in 0..opts.steps {
        let sample = &dataset[((start + i) % dataset.len() as u64) as usize];
        match trainer.step(sample) {
            Ok(row) => on_row(&row),
            Err(e) => {
                if let (Some(dir), Error::Diverged { .. }) = (&opts.out_dir, &e) {
                    write_checkpoint(dir, trainer)?;
                }
                return Err(e);
            }
        }
        let done = trainer.step_count();
        if let Some(dir) = &opts.out_dir {
            if opts.checkpoint_every > 0 && done.is_multiple_of(opts.checkpoint_every) && i + 1 < opts.steps {
                write_checkpoint(dir, trainer)?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        write_checkpoint(dir, trainer)?;
    }
    Ok(())
}

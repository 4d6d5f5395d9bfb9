use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learning-rate schedule indexed by the zero-based step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Halve the rate after one third and again after two thirds of
    /// `total_steps`.
    StepDecay { total_steps: u64 },
}

impl Schedule {
    pub fn factor(&self, step: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::StepDecay { total_steps } => {
                let drops = u64::from(3 * step >= total_steps) + u64::from(3 * step >= 2 * total_steps);
                0.5f64.powi(drops as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: IndexMap<String, Tensor<f32>>,
    pub v: IndexMap<String, Tensor<f32>>,
    /// Number of completed updates.
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: Schedule,
}

impl AdamState {
    /// Zero moments for `params`, standard betas and epsilon.
    pub fn new(params: &IndexMap<String, Tensor<f32>>, lr: f64, schedule: Schedule) -> Self {
        let zeros: IndexMap<_, _> = params
            .iter()
            .map(|(k, p)| (k.clone(), Tensor::zeros(p.shape())))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
        }
    }

    /// Rate used by the next update.
    pub fn current_lr(&self) -> f64 {
        self.lr * self.schedule.factor(self.t)
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort the step
/// before anything is modified.
pub fn adam_step(
    params: &mut IndexMap<String, Tensor<f32>>,
    grads: &IndexMap<String, Tensor<f32>>,
    state: &mut AdamState,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Config(format!("no gradient for parameter {name}")))?;
        if g.shape() != p.shape() || state.m.get(name).map(Tensor::shape) != Some(p.shape()) {
            return Err(Error::Config(format!("gradient or moment shape mismatch for {name}")));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let lr = state.current_lr();
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads[name].data();
        let m = state.m.get_mut(name).expect("checked").data_mut();
        let v = state.v.get_mut(name).expect("checked").data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let gi = f64::from(g[i]);
            let mi = b1 * f64::from(m[i]) + (1.0 - b1) * gi;
            let vi = b2 * f64::from(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            *w = (f64::from(*w) - step) as f32;
        }
    }
    Ok(())
}

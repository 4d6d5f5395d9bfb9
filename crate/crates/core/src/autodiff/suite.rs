//! Finite-difference checks over every differentiable op, every loss term
//! and a full forward pass of the smallest network.
//!
//! Inputs are drawn away from the kinks of `abs`, from integer sampling
//! coordinates and from zero denominators, so that the central difference
//! is a valid reference.

use std::rc::Rc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check_inputs, ops, Fault, GradCheckOptions, Var};
use crate::disparity::DisparityMap;
use crate::error::Result;
use crate::kernels::cost_volume::Direction;
use crate::losses::{self, LossInputs, LossWeights, WarpDirection};
use crate::net::{soft_argmax, Model, ModelConfig, ShapeTrace, Variant};
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;

/// Every case run by [`run_suite`], in report order.
pub const CASES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "add_scalar",
    "neg",
    "abs",
    "exp",
    "elu",
    "sigmoid",
    "sum",
    "mean",
    "weighted_sum",
    "reshape",
    "conv2d",
    "conv2d_stride2",
    "conv3d",
    "conv3d_stride2",
    "conv_transpose2d",
    "conv_transpose3d",
    "softmax",
    "contract_last",
    "volume_to_hwd",
    "sample_bilinear_x",
    "cost_volume_concat",
    "cost_volume_corr",
    "box_mean3",
    "forward_diff",
    "soft_argmax",
    "warp",
    "ssim",
    "photometric",
    "loss_image",
    "loss_lidar",
    "loss_lr",
    "loss_smooth",
    "total_loss",
    "network_tiny",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: &'static str,
    pub seed: u64,
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

struct Inputs {
    rng: ChaCha8Rng,
}

impl Inputs {
    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| self.rng.gen_range(lo..hi))
    }

    /// Magnitudes in `[0.2, 1)` with random sign.
    fn signed(&mut self, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| {
            let m = self.rng.gen_range(0.2..1.0);
            if self.rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
    }

    /// Values whose fractional part lies in `[0.15, 0.85]`.
    fn off_grid(&mut self, shape: &[usize], max_int: usize) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| {
            self.rng.gen_range(0..=max_int) as f64 + self.rng.gen_range(0.15..0.85)
        })
    }

    fn gt_near(&mut self, d: &Tensor<f64>) -> DisparityMap {
        let &[h, w] = d.shape() else { unreachable!() };
        let offsets = self.signed(d.shape());
        let values = d.zip_map(&offsets, |v, o| v + 1.5 * o).expect("same shape");
        let valid: Vec<bool> = (0..h * w).map(|_| self.rng.gen_bool(0.5)).collect();
        DisparityMap::new(values.cast(), valid).expect("finite values")
    }
}

/// Fixed non-constant weights so each output element gets its own cotangent.
fn probe(shape: &[usize]) -> Rc<Tensor<f64>> {
    Rc::new(Tensor::from_fn(shape, |i| (1.7 * i as f64 + 0.3).sin() + 0.1))
}

fn reduce<'t>(v: Result<Var<'t, f64>>) -> Result<Var<'t, f64>> {
    let v = v?;
    let w = probe(v.shape());
    ops::weighted_sum(&v, w)
}

fn check<F>(name: &'static str, seed: u64, points: Vec<Tensor<f64>>, opts: &GradCheckOptions, f: F) -> Result<CaseResult>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let r = grad_check_inputs(f, &points, opts)?;
    Ok(CaseResult {
        name,
        seed,
        max_rel_error: r.max_rel_error,
        coords_checked: r.coords_checked,
    })
}

/// Runs every case in [`CASES`] with inputs drawn from `seed`. With a fault
/// the analytic gradients come from a tape carrying it.
pub fn run_suite(seed: u64, fault: Option<Fault>) -> Result<Vec<CaseResult>> {
    let mut g = Inputs {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let opts = GradCheckOptions {
        seed,
        fault,
        ..Default::default()
    };
    let sampled = GradCheckOptions {
        max_coords: Some(24),
        fallback_steps: vec![1e-6, 1e-3],
        ..opts.clone()
    };
    let o = &opts;
    let mut out = Vec::with_capacity(CASES.len());
    let s = [3, 4, 2];

    let (a, b) = (g.uniform(&s, -1.0, 1.0), g.uniform(&s, -1.0, 1.0));
    out.push(check("add", seed, vec![a.clone(), b.clone()], o, |x| reduce(ops::add(&x[0], &x[1])))?);
    out.push(check("sub", seed, vec![a.clone(), b.clone()], o, |x| reduce(ops::sub(&x[0], &x[1])))?);
    out.push(check("mul", seed, vec![a.clone(), b.clone()], o, |x| reduce(ops::mul(&x[0], &x[1])))?);
    let den = g.uniform(&s, 0.5, 1.5);
    out.push(check("div", seed, vec![a.clone(), den], o, |x| reduce(ops::div(&x[0], &x[1])))?);
    out.push(check("scale", seed, vec![a.clone()], o, |x| reduce(Ok(ops::scale(&x[0], -1.3))))?);
    out.push(check("add_scalar", seed, vec![a.clone()], o, |x| reduce(Ok(ops::add_scalar(&x[0], 0.7))))?);
    out.push(check("neg", seed, vec![a.clone()], o, |x| reduce(Ok(ops::neg(&x[0]))))?);
    out.push(check("abs", seed, vec![g.signed(&s)], o, |x| reduce(Ok(ops::abs(&x[0]))))?);
    out.push(check("exp", seed, vec![a.clone()], o, |x| reduce(Ok(ops::exp(&x[0]))))?);
    out.push(check("elu", seed, vec![g.signed(&s)], o, |x| reduce(Ok(ops::elu(&x[0]))))?);
    out.push(check("sigmoid", seed, vec![g.uniform(&s, -3.0, 3.0)], o, |x| {
        reduce(Ok(ops::sigmoid(&x[0])))
    })?);
    out.push(check("sum", seed, vec![a.clone()], o, |x| {
        Ok(ops::scale(&ops::sum(&ops::mul(&x[0], &x[0])?), 0.5))
    })?);
    out.push(check("mean", seed, vec![a.clone()], o, |x| Ok(ops::mean(&ops::exp(&x[0]))))?);
    out.push(check("weighted_sum", seed, vec![a.clone()], o, |x| reduce(Ok(x[0].clone())))?);
    out.push(check("reshape", seed, vec![a], o, |x| reduce(ops::reshape(&x[0], &[4, 6])))?);

    let img = g.uniform(&[5, 6, 2], -1.0, 1.0);
    let k2 = g.uniform(&[3, 3, 2, 3], -0.5, 0.5);
    let b3 = g.uniform(&[3], -0.5, 0.5);
    out.push(check("conv2d", seed, vec![img.clone(), k2.clone(), b3.clone()], o, |x| {
        reduce(ops::conv(&x[0], &x[1], &x[2], 1))
    })?);
    let k5 = g.uniform(&[5, 5, 2, 3], -0.5, 0.5);
    out.push(check("conv2d_stride2", seed, vec![img.clone(), k5, b3.clone()], o, |x| {
        reduce(ops::conv(&x[0], &x[1], &x[2], 2))
    })?);
    let vol = g.uniform(&[4, 3, 4, 2], -1.0, 1.0);
    let k3 = g.uniform(&[3, 3, 3, 2, 3], -0.5, 0.5);
    out.push(check("conv3d", seed, vec![vol.clone(), k3.clone(), b3.clone()], o, |x| {
        reduce(ops::conv(&x[0], &x[1], &x[2], 1))
    })?);
    out.push(check("conv3d_stride2", seed, vec![vol, k3, b3.clone()], o, |x| {
        reduce(ops::conv(&x[0], &x[1], &x[2], 2))
    })?);
    let small = g.uniform(&[3, 3, 2], -1.0, 1.0);
    let kt2 = g.uniform(&[3, 3, 3, 2], -0.5, 0.5);
    out.push(check("conv_transpose2d", seed, vec![small, kt2, b3.clone()], o, |x| {
        reduce(ops::conv_transpose(&x[0], &x[1], &x[2], 2))
    })?);
    let svol = g.uniform(&[2, 2, 3, 2], -1.0, 1.0);
    let kt3 = g.uniform(&[3, 3, 3, 3, 2], -0.5, 0.5);
    out.push(check("conv_transpose3d", seed, vec![svol, kt3, b3], o, |x| {
        reduce(ops::conv_transpose(&x[0], &x[1], &x[2], 2))
    })?);

    let logits = g.uniform(&[3, 4, 5], -2.0, 2.0);
    for axis in 0..3 {
        out.push(check("softmax", seed, vec![logits.clone()], o, move |x| {
            reduce(ops::softmax(&x[0], axis))
        })?);
    }
    out.push(check("contract_last", seed, vec![logits.clone()], o, |x| {
        reduce(ops::contract_last(&x[0], vec![0.5, -1.0, 2.0, 0.25, 1.5]))
    })?);
    out.push(check("volume_to_hwd", seed, vec![g.uniform(&[3, 2, 4, 1], -1.0, 1.0)], o, |x| {
        reduce(ops::volume_to_hwd(&x[0]))
    })?);

    let (h, w) = (3, 7);
    let rows = g.uniform(&[h, w, 2], 0.0, 1.0);
    let xs = g.off_grid(&[h, w], w - 2);
    out.push(check("sample_bilinear_x", seed, vec![rows.clone(), xs], o, |x| {
        reduce(ops::sample_bilinear_x(&x[0], &x[1]))
    })?);
    let (fa, fb) = (g.uniform(&[2, 6, 3], -1.0, 1.0), g.uniform(&[2, 6, 3], -1.0, 1.0));
    for dir in [Direction::LeftRef, Direction::RightRef] {
        out.push(check("cost_volume_concat", seed, vec![fa.clone(), fb.clone()], o, move |x| {
            reduce(ops::cost_volume_concat(&x[0], &x[1], 4, dir))
        })?);
        out.push(check("cost_volume_corr", seed, vec![fa.clone(), fb.clone()], o, move |x| {
            reduce(ops::cost_volume_corr(&x[0], &x[1], 4, dir))
        })?);
    }
    out.push(check("box_mean3", seed, vec![rows.clone()], o, |x| reduce(ops::box_mean3(&x[0])))?);
    for axis in 0..2 {
        out.push(check("forward_diff", seed, vec![rows.clone()], o, move |x| {
            reduce(ops::forward_diff(&x[0], axis))
        })?);
    }
    out.push(check("soft_argmax", seed, vec![logits], o, |x| reduce(soft_argmax(&x[0])))?);

    let (h, w) = (5, 9);
    let left = g.uniform(&[h, w, 3], 0.0, 1.0);
    let right = g.uniform(&[h, w, 3], 0.0, 1.0);
    let d_l = g.off_grid(&[h, w], 3);
    let d_r = g.off_grid(&[h, w], 3);
    for dir in [WarpDirection::Lr, WarpDirection::Rl] {
        out.push(check("warp", seed, vec![right.clone(), d_l.clone()], o, move |x| {
            reduce(losses::warp(&x[0], &x[1], dir))
        })?);
    }
    let weights = LossWeights::default();
    out.push(check("ssim", seed, vec![left.clone(), right.clone()], o, |x| {
        reduce(losses::ssim(&x[0], &x[1], weights.c1, weights.c2))
    })?);
    out.push(check("photometric", seed, vec![left.clone(), right.clone()], o, |x| {
        losses::photometric(&x[0], &x[1], &weights)
    })?);
    out.push(check(
        "loss_image",
        seed,
        vec![left.clone(), right.clone(), d_l.clone(), d_r.clone()],
        o,
        |x| losses::loss_image(&x[0], &x[1], &x[2], Some(&x[3]), &weights),
    )?);
    let max_d = 8;
    let gt_l = g.gt_near(&d_l);
    let gt_r = g.gt_near(&d_r);
    out.push(check("loss_lidar", seed, vec![d_l.clone(), d_r.clone()], o, |x| {
        Ok(losses::loss_lidar(&x[0], Some(&x[1]), &gt_l, Some(&gt_r), max_d)?.value)
    })?);
    out.push(check("loss_lr", seed, vec![d_l.clone(), d_r.clone()], o, |x| {
        losses::loss_lr(&x[0], &x[1], max_d)
    })?);
    out.push(check("loss_smooth", seed, vec![d_l.clone()], o, |x| {
        losses::loss_smooth(&x[0], &left)
    })?);
    let sample = LossInputs {
        left: &left,
        right: &right,
        gt_left: Some(&gt_l),
        gt_right: Some(&gt_r),
        max_disparity: max_d,
    };
    out.push(check("total_loss", seed, vec![d_l, d_r], o, |x| {
        Ok(losses::total_loss(&sample, &x[0], Some(&x[1]), &weights)?.0)
    })?);

    out.push(network_case(seed, &mut g, &sampled)?);
    Ok(out)
}

/// Gradient of the total loss of the tiny network at 8×8 with respect to
/// every parameter tensor.
fn network_case(seed: u64, g: &mut Inputs, opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = ModelConfig::new(Variant::Tiny, 8, 8, 8).with_features(4);
    let model: Model<f64> = Model::build(cfg, seed)?;
    let left = g.uniform(&[8, 8, 3], 0.0, 1.0);
    let right = g.uniform(&[8, 8, 3], 0.0, 1.0);
    let base = g.uniform(&[8, 8], 2.0, 6.0);
    let gt_l = g.gt_near(&base);
    let gt_r = g.gt_near(&base);
    let names: Vec<String> = model.params().keys().cloned().collect();
    let points: Vec<Tensor<f64>> = model.params().values().cloned().collect();
    let weights = LossWeights::default();
    let sample = LossInputs {
        left: &left,
        right: &right,
        gt_left: Some(&gt_l),
        gt_right: Some(&gt_r),
        max_disparity: cfg.max_disparity,
    };
    check("network_tiny", seed, points, opts, |x| {
        let tape = x[0].tape();
        let p: IndexMap<String, Var<'_, f64>> = names.iter().cloned().zip(x.iter().cloned()).collect();
        let pred = model.forward(
            &p,
            &tape.constant(left.clone()),
            &tape.constant(right.clone()),
            &mut ShapeTrace::disabled(),
        )?;
        Ok(losses::total_loss(&sample, &pred.left, pred.right.as_ref(), &weights)?.0)
    })
}

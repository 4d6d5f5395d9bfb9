//! The semi-supervised stereo loss: photometric reconstruction, sparse
//! ground-truth supervision, left-right consistency and edge-aware
//! smoothness.
//!
//! Disparity arguments are in pixel units; every term except the
//! photometric one is evaluated on maps divided by the maximum disparity.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use crate::autodiff::ops;
use crate::autodiff::Var;
use crate::disparity::DisparityMap;
use crate::error::{shape_err, Error, Result};
use crate::kernels;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Photometric reconstruction.
    pub lambda1: f64,
    /// Ground-truth disparity.
    pub lambda2: f64,
    /// Left-right consistency.
    pub lambda3: f64,
    /// Smoothness.
    pub lambda4: f64,
    /// SSIM share of the photometric term.
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.01,
            lambda2: 1.0,
            lambda3: 0.1,
            lambda4: 0.1,
            alpha: 0.85,
            c1: 1e-4,
            c2: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn for_mode(mode: Mode) -> Self {
        let d = Self::default();
        match mode {
            Mode::Lidar => Self {
                lambda1: 0.0,
                lambda3: 1.0,
                ..d
            },
            Mode::Photo => Self {
                lambda1: 1.0,
                lambda2: 0.0,
                lambda3: 1.0,
                ..d
            },
            Mode::LidarPhoto => d,
        }
    }

    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            ..Self::default()
        }
    }

    pub fn lambdas(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("c1", self.c1),
            ("c2", self.c2),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("{name} = {v} must be finite and nonnegative")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha = {} must lie in [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Which supervision signals drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Lidar,
    Photo,
    LidarPhoto,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Lidar => "lidar",
            Mode::Photo => "photo",
            Mode::LidarPhoto => "lidar_photo",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::Lidar, Mode::Photo, Mode::LidarPhoto]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    /// `out(x, y) = image(x - d(x, y), y)`
    Lr,
    /// `out(x, y) = image(x + d(x, y), y)`
    Rl,
}

fn column_grid<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    Tensor::from_fn(&[h, w], |i| T::from_usize(i % w).unwrap())
}

/// Resamples `image` (`H×W` or `H×W×C`) along rows by `disparity` (`H×W`,
/// pixels) with bilinear interpolation.
pub fn warp<'t, T: Scalar>(
    image: &Var<'t, T>,
    disparity: &Var<'t, T>,
    dir: WarpDirection,
) -> Result<Var<'t, T>> {
    let &[h, w] = disparity.shape() else {
        return Err(shape_err("warp", format!("disparity must be H×W, got {:?}", disparity.shape())));
    };
    let grid = disparity.tape().constant(column_grid(h, w));
    let xs = match dir {
        WarpDirection::Lr => ops::sub(&grid, disparity)?,
        WarpDirection::Rl => ops::add(&grid, disparity)?,
    };
    ops::sample_bilinear_x(image, &xs)
}

/// Per-pixel, per-channel SSIM over a truncated 3×3 uniform window.
pub fn ssim<'t, T: Scalar>(x: &Var<'t, T>, y: &Var<'t, T>, c1: f64, c2: f64) -> Result<Var<'t, T>> {
    let two = T::lit(2.0);
    let mx = ops::box_mean3(x)?;
    let my = ops::box_mean3(y)?;
    let var = |a: &Var<'t, T>, b: &Var<'t, T>, ma: &Var<'t, T>, mb: &Var<'t, T>| {
        ops::sub(&ops::box_mean3(&ops::mul(a, b)?)?, &ops::mul(ma, mb)?)
    };
    let sx = var(x, x, &mx, &mx)?;
    let sy = var(y, y, &my, &my)?;
    let sxy = var(x, y, &mx, &my)?;
    // Both factors are formed so that x == y gives bitwise-equal numerator
    // and denominator.
    let num = ops::mul(
        &ops::add_scalar(&ops::scale(&ops::mul(&mx, &my)?, two), T::lit(c1)),
        &ops::add_scalar(&ops::scale(&sxy, two), T::lit(c2)),
    )?;
    let den = ops::mul(
        &ops::add_scalar(&ops::add(&ops::mul(&mx, &mx)?, &ops::mul(&my, &my)?)?, T::lit(c1)),
        &ops::add_scalar(&ops::add(&sx, &sy)?, T::lit(c2)),
    )?;
    ops::div(&num, &den)
}

/// `mean(α(1 − SSIM(I, Ĩ))/2 + (1 − α)|I − Ĩ|)` for one view.
pub fn photometric<'t, T: Scalar>(
    image: &Var<'t, T>,
    reconstructed: &Var<'t, T>,
    w: &LossWeights,
) -> Result<Var<'t, T>> {
    let s = ssim(image, reconstructed, w.c1, w.c2)?;
    let dssim = ops::scale(&ops::add_scalar(&ops::neg(&s), T::one()), T::lit(w.alpha / 2.0));
    let l1 = ops::scale(&ops::abs(&ops::sub(image, reconstructed)?), T::lit(1.0 - w.alpha));
    Ok(ops::mean(&ops::add(&dssim, &l1)?))
}

/// Photometric term for both views; `d_r = None` drops the right side.
pub fn loss_image<'t, T: Scalar>(
    left: &Var<'t, T>,
    right: &Var<'t, T>,
    d_l: &Var<'t, T>,
    d_r: Option<&Var<'t, T>>,
    w: &LossWeights,
) -> Result<Var<'t, T>> {
    let recon_l = warp(right, d_l, WarpDirection::Rl)?;
    let mut total = photometric(left, &recon_l, w)?;
    if let Some(d_r) = d_r {
        let recon_r = warp(left, d_r, WarpDirection::Lr)?;
        total = ops::add(&total, &photometric(right, &recon_r, w)?)?;
    }
    Ok(total)
}

/// Masked mean of `|d − gt| / D` over valid ground-truth pixels. `None`
/// when the map has no valid pixel.
pub fn lidar_term<'t, T: Scalar>(
    d: &Var<'t, T>,
    gt: &DisparityMap,
    max_disparity: usize,
) -> Result<Option<Var<'t, T>>> {
    if d.shape() != gt.values().shape() {
        return Err(shape_err(
            "loss_lidar",
            format!("prediction {:?} vs ground truth {:?}", d.shape(), gt.values().shape()),
        ));
    }
    let n = gt.valid_count();
    if n == 0 {
        return Ok(None);
    }
    let inv_d = T::one() / T::from_usize(max_disparity).unwrap();
    let target: Tensor<T> = gt.values().cast::<T>().map(|v| v * inv_d);
    let target = d.tape().constant(target);
    let weight = T::one() / T::from_usize(n).unwrap();
    let mask = Rc::new(gt.mask().cast::<T>().map(|m| m * weight));
    let diff = ops::abs(&ops::sub(&ops::scale(d, inv_d), &target)?);
    Ok(Some(ops::weighted_sum(&diff, mask)?))
}

/// Result of the supervised term: the value and whether any side had no
/// valid ground truth.
pub struct LidarLoss<'t, T: Scalar> {
    pub value: Var<'t, T>,
    pub empty_mask: bool,
}

pub fn loss_lidar<'t, T: Scalar>(
    d_l: &Var<'t, T>,
    d_r: Option<&Var<'t, T>>,
    gt_l: &DisparityMap,
    gt_r: Option<&DisparityMap>,
    max_disparity: usize,
) -> Result<LidarLoss<'t, T>> {
    let mut empty = false;
    let mut value = zero_like(d_l);
    let mut sides = vec![(d_l, Some(gt_l))];
    if let Some(d_r) = d_r {
        sides.push((d_r, gt_r));
    }
    for (d, gt) in sides {
        match gt {
            Some(gt) => match lidar_term(d, gt, max_disparity)? {
                Some(t) => value = ops::add(&value, &t)?,
                None => empty = true,
            },
            None => empty = true,
        }
    }
    Ok(LidarLoss {
        value,
        empty_mask: empty,
    })
}

fn zero_like<'t, T: Scalar>(v: &Var<'t, T>) -> Var<'t, T> {
    v.tape().constant(Tensor::scalar(T::zero()))
}

/// `mean|d_l − w_rl(d_r, d_l)| + mean|d_r − w_lr(d_l, d_r)|` on normalized
/// maps.
pub fn loss_lr<'t, T: Scalar>(d_l: &Var<'t, T>, d_r: &Var<'t, T>, max_disparity: usize) -> Result<Var<'t, T>> {
    let inv_d = T::one() / T::from_usize(max_disparity).unwrap();
    let (nl, nr) = (ops::scale(d_l, inv_d), ops::scale(d_r, inv_d));
    let recon_l = warp(&nr, d_l, WarpDirection::Rl)?;
    let recon_r = warp(&nl, d_r, WarpDirection::Lr)?;
    let el = ops::mean(&ops::abs(&ops::sub(&nl, &recon_l)?));
    let er = ops::mean(&ops::abs(&ops::sub(&nr, &recon_r)?));
    ops::add(&el, &er)
}

/// `exp(−‖∂I‖₁)` along `axis`, normalized by the number of differences.
fn edge_weights<T: Scalar>(image: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let diff = kernels::forward_diff(image, axis)?;
    let (h, w) = (diff.shape()[0], diff.shape()[1]);
    let c = diff.len() / (h * w);
    let inv_n = T::one() / T::from_usize(h * w).unwrap();
    let weights = diff
        .data()
        .chunks_exact(c)
        .map(|px| (-px.iter().fold(T::zero(), |a, &v| a + v.abs())).exp() * inv_n)
        .collect();
    Tensor::from_vec(&[h, w], weights)
}

/// Edge-aware smoothness of one normalized map `d` (`H×W`) against its image.
pub fn loss_smooth<'t, T: Scalar>(d: &Var<'t, T>, image: &Tensor<T>) -> Result<Var<'t, T>> {
    if image.shape()[..2] != *d.shape() {
        return Err(shape_err(
            "loss_smooth",
            format!("disparity {:?} vs image {:?}", d.shape(), image.shape()),
        ));
    }
    let mut total = zero_like(d);
    for axis in [1, 0] {
        let w = Rc::new(edge_weights(image, axis)?);
        let g = ops::abs(&ops::forward_diff(d, axis)?);
        total = ops::add(&total, &ops::weighted_sum(&g, w)?)?;
    }
    Ok(total)
}

/// Inputs of one training sample, values in `[0, 1]`.
pub struct LossInputs<'a, T: Scalar> {
    pub left: &'a Tensor<T>,
    pub right: &'a Tensor<T>,
    pub gt_left: Option<&'a DisparityMap>,
    pub gt_right: Option<&'a DisparityMap>,
    pub max_disparity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub image: f64,
    pub lidar: f64,
    pub lr: f64,
    pub ds: f64,
    /// A ground-truth map was missing or had no valid pixel.
    pub empty_mask: bool,
}

impl LossBreakdown {
    pub fn terms(&self) -> [f64; 4] {
        [self.image, self.lidar, self.lr, self.ds]
    }
}

/// `λ₁E_image + λ₂E_lidar + λ₃E_lr + λ₄E_ds`. Without a right prediction the
/// right-side terms and the consistency term are dropped. Terms whose
/// weight is zero are not evaluated and report 0.
pub fn total_loss<'t, T: Scalar>(
    sample: &LossInputs<'_, T>,
    d_l: &Var<'t, T>,
    d_r: Option<&Var<'t, T>>,
    w: &LossWeights,
) -> Result<(Var<'t, T>, LossBreakdown)> {
    let tape = d_l.tape();
    let max_d = sample.max_disparity;
    let left = tape.constant(sample.left.clone());
    let right = tape.constant(sample.right.clone());
    let inv_d = T::one() / T::from_usize(max_d).unwrap();

    let [l1, l2, l3, l4] = w.lambdas();
    let image = if l1 != 0.0 {
        loss_image(&left, &right, d_l, d_r, w)?
    } else {
        zero_like(d_l)
    };
    let lidar = match sample.gt_left {
        Some(gt_l) if l2 != 0.0 => loss_lidar(d_l, d_r, gt_l, sample.gt_right, max_d)?,
        gt => LidarLoss {
            value: zero_like(d_l),
            empty_mask: gt.is_none_or(|g| g.valid_count() == 0),
        },
    };
    let lr = match d_r {
        Some(d_r) if l3 != 0.0 => loss_lr(d_l, d_r, max_d)?,
        _ => zero_like(d_l),
    };
    let ds = if l4 != 0.0 {
        let mut ds = loss_smooth(&ops::scale(d_l, inv_d), sample.left)?;
        if let Some(d_r) = d_r {
            ds = ops::add(&ds, &loss_smooth(&ops::scale(d_r, inv_d), sample.right)?)?;
        }
        ds
    } else {
        zero_like(d_l)
    };

    let mut total = zero_like(d_l);
    for (lambda, term) in [l1, l2, l3, l4].into_iter().zip([&image, &lidar.value, &lr, &ds]) {
        if lambda != 0.0 {
            total = ops::add(&total, &ops::scale(term, T::lit(lambda)))?;
        }
    }
    let f = |v: &Var<'t, T>| v.item().and_then(|x| x.to_f64()).unwrap_or(f64::NAN);
    let breakdown = LossBreakdown {
        total: f(&total),
        image: f(&image),
        lidar: f(&lidar.value),
        lr: f(&lr),
        ds: f(&ds),
        empty_mask: lidar.empty_mask,
    };
    Ok((total, breakdown))
}

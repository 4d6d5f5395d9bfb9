//! Cost volumes built by sliding one feature map along the epipolar lines
//! of the other.
//!
//! With the reference view first, slice `k` pairs `reference(y, x)` with
//! `target(y, x + k)` for [`Direction::LeftRef`] and `target(y, x - k)` for
//! [`Direction::RightRef`]. This matches the warping convention
//! `left(x) = right(x + d)`. Target positions outside the image are zero.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    LeftRef,
    RightRef,
}

impl Direction {
    /// Target column for reference column `x` at shift `k`, if inside.
    #[inline]
    fn target(self, x: usize, k: usize, width: usize) -> Option<usize> {
        match self {
            Direction::LeftRef => (x + k < width).then_some(x + k),
            Direction::RightRef => x.checked_sub(k),
        }
    }
}

fn check<T: Scalar>(
    reference: &Tensor<T>,
    target: &Tensor<T>,
    levels: usize,
) -> Result<(usize, usize, usize)> {
    let &[h, w, f] = reference.shape() else {
        return Err(shape_err(
            "cost_volume",
            format!("features must be H×W×F, got {:?}", reference.shape()),
        ));
    };
    if reference.shape() != target.shape() {
        return Err(shape_err(
            "cost_volume",
            format!("{:?} vs {:?}", reference.shape(), target.shape()),
        ));
    }
    if levels == 0 || levels > w {
        return Err(shape_err(
            "cost_volume",
            format!("disparity levels {levels} must be in 1..={w} (feature width)"),
        ));
    }
    Ok((h, w, f))
}

/// `levels × H × W × 2F`: reference channels first, shifted target second.
pub fn concat<T: Scalar>(
    reference: &Tensor<T>,
    target: &Tensor<T>,
    levels: usize,
    dir: Direction,
) -> Result<Tensor<T>> {
    let (h, w, f) = check(reference, target, levels)?;
    let (r, t) = (reference.data(), target.data());
    let mut out = vec![T::zero(); levels * h * w * 2 * f];
    for k in 0..levels {
        for y in 0..h {
            for x in 0..w {
                let dst = ((k * h + y) * w + x) * 2 * f;
                let src = (y * w + x) * f;
                out[dst..dst + f].copy_from_slice(&r[src..src + f]);
                if let Some(xt) = dir.target(x, k, w) {
                    let s = (y * w + xt) * f;
                    out[dst + f..dst + 2 * f].copy_from_slice(&t[s..s + f]);
                }
            }
        }
    }
    Tensor::from_vec(&[levels, h, w, 2 * f], out)
}

pub fn concat_backward<T: Scalar>(
    grad: &Tensor<T>,
    feature_shape: &[usize],
    dir: Direction,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let &[levels, h, w, f2] = grad.shape() else {
        return Err(shape_err("cost_volume", "gradient rank"));
    };
    let f = f2 / 2;
    let g = grad.data();
    let mut dr = vec![T::zero(); h * w * f];
    let mut dt = vec![T::zero(); h * w * f];
    for k in 0..levels {
        for y in 0..h {
            for x in 0..w {
                let src = ((k * h + y) * w + x) * 2 * f;
                let p = (y * w + x) * f;
                for c in 0..f {
                    dr[p + c] += g[src + c];
                }
                if let Some(xt) = dir.target(x, k, w) {
                    let q = (y * w + xt) * f;
                    for c in 0..f {
                        dt[q + c] += g[src + f + c];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(feature_shape, dr)?,
        Tensor::from_vec(feature_shape, dt)?,
    ))
}

/// `levels × H × W × 1`: channel-mean dot product of the paired features.
pub fn correlation<T: Scalar>(
    reference: &Tensor<T>,
    target: &Tensor<T>,
    levels: usize,
    dir: Direction,
) -> Result<Tensor<T>> {
    let (h, w, f) = check(reference, target, levels)?;
    let (r, t) = (reference.data(), target.data());
    let inv_f = T::one() / T::from_usize(f).unwrap();
    let mut out = vec![T::zero(); levels * h * w];
    for k in 0..levels {
        for y in 0..h {
            for x in 0..w {
                if let Some(xt) = dir.target(x, k, w) {
                    let a = &r[(y * w + x) * f..(y * w + x + 1) * f];
                    let b = &t[(y * w + xt) * f..(y * w + xt + 1) * f];
                    let dot: T = a.iter().zip(b).map(|(&p, &q)| p * q).sum();
                    out[(k * h + y) * w + x] = dot * inv_f;
                }
            }
        }
    }
    Tensor::from_vec(&[levels, h, w, 1], out)
}

pub fn correlation_backward<T: Scalar>(
    grad: &Tensor<T>,
    reference: &Tensor<T>,
    target: &Tensor<T>,
    dir: Direction,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let &[levels, h, w, _] = grad.shape() else {
        return Err(shape_err("cost_volume", "gradient rank"));
    };
    let f = reference.shape()[2];
    let inv_f = T::one() / T::from_usize(f).unwrap();
    let (r, t, g) = (reference.data(), target.data(), grad.data());
    let mut dr = vec![T::zero(); h * w * f];
    let mut dt = vec![T::zero(); h * w * f];
    for k in 0..levels {
        for y in 0..h {
            for x in 0..w {
                if let Some(xt) = dir.target(x, k, w) {
                    let gk = g[(k * h + y) * w + x] * inv_f;
                    let p = (y * w + x) * f;
                    let q = (y * w + xt) * f;
                    for c in 0..f {
                        dr[p + c] += gk * t[q + c];
                        dt[q + c] += gk * r[p + c];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(reference.shape(), dr)?,
        Tensor::from_vec(reference.shape(), dt)?,
    ))
}

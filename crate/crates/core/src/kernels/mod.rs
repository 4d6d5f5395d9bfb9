//! Tape-free numeric kernels. The differentiable wrappers in
//! [`crate::autodiff::ops`] call into these.

pub mod conv;
pub mod cost_volume;
pub mod sampling;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    // Both branches avoid exp overflow.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `(outer, len, inner)` strides for reducing along `axis`.
pub fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err("softmax", format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_split(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in 0..n {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[at(k)] = out[at(k)] / total;
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Number of in-bounds cells of the 3×3 window centred on each pixel.
fn window_count(y: usize, x: usize, h: usize, w: usize) -> usize {
    let rows = 1 + usize::from(y > 0) + usize::from(y + 1 < h);
    let cols = 1 + usize::from(x > 0) + usize::from(x + 1 < w);
    rows * cols
}

fn box_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        _ => Err(shape_err("box_mean3", format!("expected H×W or H×W×C, got {shape:?}"))),
    }
}

/// Per-channel mean over the in-bounds part of each 3×3 neighbourhood.
pub fn box_mean3<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = box_dims(x.shape())?;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for y in 0..h {
        for xx in 0..w {
            let inv = T::one() / T::from_usize(window_count(y, xx, h, w)).unwrap();
            let dst = (y * w + xx) * c;
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in xx.saturating_sub(1)..(xx + 2).min(w) {
                    let s = (ny * w + nx) * c;
                    for ch in 0..c {
                        out[dst + ch] += src[s + ch];
                    }
                }
            }
            for v in &mut out[dst..dst + c] {
                *v *= inv;
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

pub fn box_mean3_backward<T: Scalar>(grad: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = box_dims(grad.shape())?;
    let g = grad.data();
    let mut out = vec![T::zero(); g.len()];
    for y in 0..h {
        for xx in 0..w {
            let inv = T::one() / T::from_usize(window_count(y, xx, h, w)).unwrap();
            let src = (y * w + xx) * c;
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in xx.saturating_sub(1)..(xx + 2).min(w) {
                    let d = (ny * w + nx) * c;
                    for ch in 0..c {
                        out[d + ch] += g[src + ch] * inv;
                    }
                }
            }
        }
    }
    Tensor::from_vec(grad.shape(), out)
}

/// Forward difference along axis 0 (`y`) or 1 (`x`) of an `H×W` or
/// `H×W×C` tensor; the result loses one row or column.
pub fn forward_diff<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (h, w, c) = box_dims(x.shape())?;
    let (oh, ow) = match axis {
        0 if h > 1 => (h - 1, w),
        1 if w > 1 => (h, w - 1),
        _ => {
            return Err(shape_err(
                "forward_diff",
                format!("axis {axis} of {:?} too short or invalid", x.shape()),
            ))
        }
    };
    let src = x.data();
    let step = if axis == 0 { w * c } else { c };
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for xx in 0..ow {
            let p = (y * w + xx) * c;
            for ch in 0..c {
                out.push(src[p + step + ch] - src[p + ch]);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] -= 1;
    Tensor::from_vec(&shape, out)
}

pub fn forward_diff_backward<T: Scalar>(
    grad: &Tensor<T>,
    input_shape: &[usize],
    axis: usize,
) -> Result<Tensor<T>> {
    let (_, w, c) = box_dims(input_shape)?;
    let (oh, ow, _) = box_dims(grad.shape())?;
    let step = if axis == 0 { w * c } else { c };
    let g = grad.data();
    let mut out = vec![T::zero(); input_shape.iter().product()];
    for y in 0..oh {
        for xx in 0..ow {
            let p = (y * w + xx) * c;
            for ch in 0..c {
                let gv = g[(y * ow + xx) * c + ch];
                out[p + step + ch] += gv;
                out[p + ch] -= gv;
            }
        }
    }
    Tensor::from_vec(input_shape, out)
}

//! Differentiable operations over [`Var`]s.
//!
//! Each op evaluates the forward value with a kernel from
//! [`crate::kernels`] and records a backward rule that captures the shared
//! input/output tensors it needs.

use std::rc::Rc;

use crate::autodiff::tape::{Fault, Var};
use crate::error::{shape_err, Result};
use crate::kernels::{self, conv as convk, cost_volume, sampling};
use crate::tensor::{Scalar, Tensor};

pub use crate::kernels::cost_volume::Direction;

fn same_shape<T: Scalar>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    a.zip_map(b, f).expect("shapes checked by caller")
}

pub fn add<'t, T: Scalar>(a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("add", a, b)?;
    let v = zip(a.value(), b.value(), |x, y| x + y);
    Ok(a.tape().record(
        v,
        &[a, b],
        Box::new(|g, _| Ok(vec![Some(g.clone()), Some(g.clone())])),
    ))
}

pub fn sub<'t, T: Scalar>(a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("sub", a, b)?;
    let v = zip(a.value(), b.value(), |x, y| x - y);
    Ok(a.tape().record(
        v,
        &[a, b],
        Box::new(|g, _| Ok(vec![Some(g.clone()), Some(g.map(|x| -x))])),
    ))
}

pub fn mul<'t, T: Scalar>(a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("mul", a, b)?;
    let v = zip(a.value(), b.value(), |x, y| x * y);
    let (av, bv) = (a.shared(), b.shared());
    Ok(a.tape().record(
        v,
        &[a, b],
        Box::new(move |g, need| {
            Ok(vec![
                need[0].then(|| zip(g, &bv, |g, y| g * y)),
                need[1].then(|| zip(g, &av, |g, x| g * x)),
            ])
        }),
    ))
}

pub fn div<'t, T: Scalar>(a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("div", a, b)?;
    let v = Rc::new(zip(a.value(), b.value(), |x, y| x / y));
    let (bv, out) = (b.shared(), Rc::clone(&v));
    Ok(a.tape().record(
        v,
        &[a, b],
        Box::new(move |g, need| {
            let ga = zip(g, &bv, |g, y| g / y);
            let gb = need[1].then(|| zip(&ga, &out, |ga, q| -ga * q));
            Ok(vec![need[0].then_some(ga), gb])
        }),
    ))
}

pub fn scale<'t, T: Scalar>(a: &Var<'t, T>, s: T) -> Var<'t, T> {
    a.tape().record(
        a.value().map(|x| x * s),
        &[a],
        Box::new(move |g, _| Ok(vec![Some(g.map(|x| x * s))])),
    )
}

pub fn add_scalar<'t, T: Scalar>(a: &Var<'t, T>, s: T) -> Var<'t, T> {
    a.tape().record(
        a.value().map(|x| x + s),
        &[a],
        Box::new(|g, _| Ok(vec![Some(g.clone())])),
    )
}

pub fn neg<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    scale(a, -T::one())
}

/// Subgradient 0 at 0.
pub fn abs<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let av = a.shared();
    a.tape().record(
        a.value().map(T::abs),
        &[a],
        Box::new(move |g, _| {
            Ok(vec![Some(zip(g, &av, |g, x| {
                if x > T::zero() {
                    g
                } else if x < T::zero() {
                    -g
                } else {
                    T::zero()
                }
            }))])
        }),
    )
}

pub fn exp<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let v = Rc::new(a.value().map(T::exp));
    let out = Rc::clone(&v);
    a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| Ok(vec![Some(zip(g, &out, |g, y| g * y))])),
    )
}

pub fn elu<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let av = a.shared();
    let faulty = a.tape().fault() == Some(Fault::EluBackward);
    a.tape().record(
        a.value().map(kernels::elu),
        &[a],
        Box::new(move |g, _| {
            Ok(vec![Some(zip(g, &av, |g, x| {
                let d = kernels::elu_grad(x);
                if faulty && x <= T::zero() {
                    g * d * T::lit(0.5)
                } else {
                    g * d
                }
            }))])
        }),
    )
}

pub fn sigmoid<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let v = Rc::new(a.value().map(kernels::sigmoid));
    let out = Rc::clone(&v);
    a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| {
            Ok(vec![Some(zip(g, &out, |g, y| g * y * (T::one() - y)))])
        }),
    )
}

/// Sum of all elements, shape `[1]`.
pub fn sum<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let shape = a.shape().to_vec();
    a.tape().record(
        Tensor::scalar(a.value().sum()),
        &[a],
        Box::new(move |g, _| Ok(vec![Some(Tensor::full(&shape, g.data()[0]))])),
    )
}

pub fn mean<'t, T: Scalar>(a: &Var<'t, T>) -> Var<'t, T> {
    let n = T::from_usize(a.value().len()).unwrap();
    scale(&sum(a), T::one() / n)
}

/// `Σ aᵢ wᵢ` against a constant weight tensor, shape `[1]`.
pub fn weighted_sum<'t, T: Scalar>(a: &Var<'t, T>, weights: Rc<Tensor<T>>) -> Result<Var<'t, T>> {
    if a.shape() != weights.shape() {
        return Err(shape_err(
            "weighted_sum",
            format!("{:?} vs weights {:?}", a.shape(), weights.shape()),
        ));
    }
    let v = Tensor::scalar(a.value().dot(&weights));
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| {
            let s = g.data()[0];
            Ok(vec![Some(weights.map(|w| w * s))])
        }),
    ))
}

pub fn reshape<'t, T: Scalar>(a: &Var<'t, T>, shape: &[usize]) -> Result<Var<'t, T>> {
    let v = a.value().clone().reshape(shape)?;
    let original = a.shape().to_vec();
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| Ok(vec![Some(g.clone().reshape(&original)?)])),
    ))
}

/// SAME-padded convolution; 2D for `H×W×C` inputs, 3D for `D×H×W×C`.
pub fn conv<'t, T: Scalar>(
    x: &Var<'t, T>,
    kernel: &Var<'t, T>,
    bias: &Var<'t, T>,
    stride: usize,
) -> Result<Var<'t, T>> {
    let v = convk::conv(x.value(), kernel.value(), bias.value(), stride)?;
    let (xv, kv) = (x.shared(), kernel.shared());
    Ok(x.tape().record(
        v,
        &[x, kernel, bias],
        Box::new(move |g, need| {
            let gr = convk::conv_backward(&xv, &kv, stride, g, need[0], need[1] || need[2])?;
            Ok(vec![gr.input, gr.kernel, gr.bias])
        }),
    ))
}

/// Transposed convolution producing `stride ×` the input spatial dims.
pub fn conv_transpose<'t, T: Scalar>(
    x: &Var<'t, T>,
    kernel: &Var<'t, T>,
    bias: &Var<'t, T>,
    stride: usize,
) -> Result<Var<'t, T>> {
    let v = convk::conv_transpose(x.value(), kernel.value(), bias.value(), stride)?;
    let (xv, kv) = (x.shared(), kernel.shared());
    Ok(x.tape().record(
        v,
        &[x, kernel, bias],
        Box::new(move |g, need| {
            let gr =
                convk::conv_transpose_backward(&xv, &kv, stride, g, need[0], need[1] || need[2])?;
            Ok(vec![gr.input, gr.kernel, gr.bias])
        }),
    ))
}

pub fn softmax<'t, T: Scalar>(a: &Var<'t, T>, axis: usize) -> Result<Var<'t, T>> {
    let (outer, n, inner) = kernels::axis_split(a.shape(), axis)?;
    let v = Rc::new(kernels::softmax(a.value(), axis)?);
    let out = Rc::clone(&v);
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| {
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * n + k) * inner + i;
                    let dot: T = (0..n).map(|k| gd[at(k)] * y[at(k)]).sum();
                    for k in 0..n {
                        dx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                    }
                }
            }
            Ok(vec![Some(Tensor::from_vec(out.shape(), dx)?)])
        }),
    ))
}

/// Contracts the last axis against constant weights: `[.., n] → [..]`.
pub fn contract_last<'t, T: Scalar>(a: &Var<'t, T>, weights: Vec<T>) -> Result<Var<'t, T>> {
    let shape = a.shape().to_vec();
    let n = *shape.last().unwrap();
    if n != weights.len() || shape.len() < 2 {
        return Err(shape_err(
            "contract_last",
            format!("{shape:?} against {} weights", weights.len()),
        ));
    }
    let out: Vec<T> = a
        .value()
        .data()
        .chunks_exact(n)
        .map(|row| row.iter().zip(&weights).map(|(&x, &w)| x * w).sum())
        .collect();
    let v = Tensor::from_vec(&shape[..shape.len() - 1], out)?;
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| {
            let mut dx = Vec::with_capacity(g.len() * n);
            for &gv in g.data() {
                dx.extend(weights.iter().map(|&w| gv * w));
            }
            Ok(vec![Some(Tensor::from_vec(&shape, dx)?)])
        }),
    ))
}

/// `D×H×W×1 → H×W×D`: moves the disparity axis last.
pub fn volume_to_hwd<'t, T: Scalar>(a: &Var<'t, T>) -> Result<Var<'t, T>> {
    let &[d, h, w, 1] = a.shape() else {
        return Err(shape_err("volume_to_hwd", format!("expected D×H×W×1, got {:?}", a.shape())));
    };
    let src = a.value().data();
    let mut out = vec![T::zero(); d * h * w];
    for k in 0..d {
        for p in 0..h * w {
            out[p * d + k] = src[k * h * w + p];
        }
    }
    let v = Tensor::from_vec(&[h, w, d], out)?;
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dx = vec![T::zero(); d * h * w];
            for k in 0..d {
                for p in 0..h * w {
                    dx[k * h * w + p] = gd[p * d + k];
                }
            }
            Ok(vec![Some(Tensor::from_vec(&[d, h, w, 1], dx)?)])
        }),
    ))
}

/// Samples each row of `image` at fractional columns `xs`; see
/// [`sampling`] for the border and integer-coordinate rules.
pub fn sample_bilinear_x<'t, T: Scalar>(image: &Var<'t, T>, xs: &Var<'t, T>) -> Result<Var<'t, T>> {
    let v = sampling::sample_bilinear_x(image.value(), xs.value())?;
    let (iv, xv) = (image.shared(), xs.shared());
    Ok(image.tape().record(
        v,
        &[image, xs],
        Box::new(move |g, need| {
            let (di, dx) = sampling::sample_bilinear_x_backward(&iv, &xv, g, need[0], need[1])?;
            Ok(vec![di, dx])
        }),
    ))
}

pub fn cost_volume_concat<'t, T: Scalar>(
    reference: &Var<'t, T>,
    target: &Var<'t, T>,
    levels: usize,
    dir: Direction,
) -> Result<Var<'t, T>> {
    let v = cost_volume::concat(reference.value(), target.value(), levels, dir)?;
    let shape = reference.shape().to_vec();
    Ok(reference.tape().record(
        v,
        &[reference, target],
        Box::new(move |g, _| {
            let (dr, dt) = cost_volume::concat_backward(g, &shape, dir)?;
            Ok(vec![Some(dr), Some(dt)])
        }),
    ))
}

pub fn cost_volume_corr<'t, T: Scalar>(
    reference: &Var<'t, T>,
    target: &Var<'t, T>,
    levels: usize,
    dir: Direction,
) -> Result<Var<'t, T>> {
    let v = cost_volume::correlation(reference.value(), target.value(), levels, dir)?;
    let (rv, tv) = (reference.shared(), target.shared());
    Ok(reference.tape().record(
        v,
        &[reference, target],
        Box::new(move |g, _| {
            let (dr, dt) = cost_volume::correlation_backward(g, &rv, &tv, dir)?;
            Ok(vec![Some(dr), Some(dt)])
        }),
    ))
}

/// Truncated 3×3 local mean, per channel.
pub fn box_mean3<'t, T: Scalar>(a: &Var<'t, T>) -> Result<Var<'t, T>> {
    let v = kernels::box_mean3(a.value())?;
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(|g, _| Ok(vec![Some(kernels::box_mean3_backward(g)?)])),
    ))
}

/// Forward difference along axis 0 (rows) or 1 (columns).
pub fn forward_diff<'t, T: Scalar>(a: &Var<'t, T>, axis: usize) -> Result<Var<'t, T>> {
    let v = kernels::forward_diff(a.value(), axis)?;
    let shape = a.shape().to_vec();
    Ok(a.tape().record(
        v,
        &[a],
        Box::new(move |g, _| Ok(vec![Some(kernels::forward_diff_backward(g, &shape, axis)?)])),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let f = sum(&x);
        let g = tape.backward(&f).unwrap();
        assert_eq!(g.of(&x).data(), &[1.0; 4]);
    }

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let f = sum(&mul(&x, &x).unwrap());
        assert_eq!(f.item(), Some(5.0));
        let g = tape.backward(&f).unwrap();
        assert_eq!(g.of(&x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        let y = scale(&x, 2.0);
        assert!(tape.backward(&y).is_err());
    }

    #[test]
    fn unused_parameters_get_zero_gradients() {
        let tape = Tape::<f32>::new();
        let a = tape.param("a", Tensor::full(&[3], 2.0));
        let _b = tape.param("b", Tensor::full(&[2, 2], 1.0));
        let f = sum(&a);
        let g = tape.backward(&f).unwrap();
        assert_eq!(g.param("a").unwrap().data(), &[1.0; 3]);
        assert_eq!(g.param("b").unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::<f32>::inference();
        let a = tape.param("a", Tensor::full(&[3], 2.0));
        let f = sum(&elu(&a));
        assert!(!f.requires_grad());
        assert!(tape.is_empty());
        assert_eq!(f.item(), Some(6.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(&[2]));
        let b = tape.leaf(Tensor::zeros(&[3]));
        assert!(add(&a, &b).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        // f = Σ (x + x) ⇒ df/dx = 2
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[3], 1.5));
        let f = sum(&add(&x, &x).unwrap());
        assert_eq!(tape.backward(&f).unwrap().of(&x).data(), &[2.0; 3]);
    }
}

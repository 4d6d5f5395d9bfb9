//! Horizontal bilinear resampling used by the warping operators.
//!
//! Each output pixel `(y, x)` reads row `y` of the source at the fractional
//! column `xs(y, x)`. Coordinates outside `[0, W-1]` clamp to the border
//! column and carry no coordinate gradient. At an interior integer
//! coordinate `i` the blend uses the cell `[i-1, i]` with weight 1 on `i`,
//! so the value is an exact gather and the coordinate derivative is the
//! left-cell slope.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

struct Cell<T> {
    x0: usize,
    x1: usize,
    t: T,
    inside: bool,
}

fn cell<T: Scalar>(xc: T, width: usize) -> Cell<T> {
    let last = T::from_usize(width - 1).unwrap();
    if xc.is_nan() || xc < T::zero() {
        return Cell {
            x0: 0,
            x1: 0,
            t: T::zero(),
            inside: false,
        };
    }
    if xc > last {
        return Cell {
            x0: width - 1,
            x1: width - 1,
            t: T::zero(),
            inside: false,
        };
    }
    let x0 = (xc.ceil().to_usize().unwrap_or(0)).saturating_sub(1);
    let x1 = (x0 + 1).min(width - 1);
    let t = xc - T::from_usize(x0).unwrap();
    Cell {
        x0,
        x1,
        t,
        inside: true,
    }
}

/// `(H, W, C)` of an image-like tensor; rank-2 maps count as one channel.
fn image_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [h, w] => Some((h, w, 1)),
        [h, w, c] => Some((h, w, c)),
        _ => None,
    }
}

fn check(image: &[usize], coords: &[usize]) -> Result<(usize, usize, usize)> {
    let (h, w, c) = image_dims(image)
        .ok_or_else(|| shape_err("sample_bilinear_x", format!("image shape {image:?}")))?;
    if coords != [h, w] {
        return Err(shape_err(
            "sample_bilinear_x",
            format!("coordinates {coords:?} do not match image {image:?}"),
        ));
    }
    Ok((h, w, c))
}

pub fn sample_bilinear_x<T: Scalar>(image: &Tensor<T>, xs: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = check(image.shape(), xs.shape())?;
    let src = image.data();
    let mut out = vec![T::zero(); h * w * c];
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            let cl = cell(xs.data()[y * w + x], w);
            let dst = &mut out[(y * w + x) * c..(y * w + x + 1) * c];
            let a = &row[cl.x0 * c..(cl.x0 + 1) * c];
            let b = &row[cl.x1 * c..(cl.x1 + 1) * c];
            let s = T::one() - cl.t;
            for ch in 0..c {
                dst[ch] = s * a[ch] + cl.t * b[ch];
            }
        }
    }
    Tensor::from_vec(image.shape(), out)
}

/// Returns `(d_image, d_coords)` for the requested arguments.
pub fn sample_bilinear_x_backward<T: Scalar>(
    image: &Tensor<T>,
    xs: &Tensor<T>,
    grad_out: &Tensor<T>,
    want_image: bool,
    want_coords: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (h, w, c) = check(image.shape(), xs.shape())?;
    let src = image.data();
    let g = grad_out.data();
    let mut d_img = want_image.then(|| vec![T::zero(); h * w * c]);
    let mut d_xs = want_coords.then(|| vec![T::zero(); h * w]);
    for y in 0..h {
        let row = y * w * c;
        for x in 0..w {
            let p = y * w + x;
            let cl = cell(xs.data()[p], w);
            let gp = &g[p * c..(p + 1) * c];
            if let Some(di) = d_img.as_mut() {
                let s = T::one() - cl.t;
                for ch in 0..c {
                    di[row + cl.x0 * c + ch] += s * gp[ch];
                    di[row + cl.x1 * c + ch] += cl.t * gp[ch];
                }
            }
            if let (Some(dx), true) = (d_xs.as_mut(), cl.inside) {
                let mut acc = T::zero();
                for ch in 0..c {
                    acc += gp[ch] * (src[row + cl.x1 * c + ch] - src[row + cl.x0 * c + ch]);
                }
                dx[p] = acc;
            }
        }
    }
    Ok((
        d_img.map(|d| Tensor::from_vec(image.shape(), d)).transpose()?,
        d_xs.map(|d| Tensor::from_vec(xs.shape(), d)).transpose()?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[1, values.len(), 1], values.to_vec()).unwrap()
    }

    fn coords(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn identity_grid_is_exact() {
        let img = Tensor::from_fn(&[3, 4, 2], |i| (i as f64).sin());
        let xs = Tensor::from_fn(&[3, 4], |i| (i % 4) as f64);
        assert_eq!(sample_bilinear_x(&img, &xs).unwrap(), img);
    }

    #[test]
    fn half_pixel_shift_with_left_clamp() {
        let out = sample_bilinear_x(&row(&[0.0, 1.0, 2.0, 3.0]), &coords(&[-0.5, 0.5, 1.5, 2.5])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.5, 2.5]);
    }

    #[test]
    fn far_out_of_range_clamps() {
        let img = row(&[4.0, 5.0, 6.0]);
        let out = sample_bilinear_x(&img, &coords(&[-10.0; 3])).unwrap();
        assert_eq!(out.data(), &[4.0; 3]);
        let out = sample_bilinear_x(&img, &coords(&[10.0; 3])).unwrap();
        assert_eq!(out.data(), &[6.0; 3]);
    }

    #[test]
    fn integer_coordinate_uses_left_cell_slope() {
        let img = row(&[0.0, 1.0, 5.0]);
        let xs = coords(&[1.0, 0.0, 2.0]);
        let g = Tensor::full(&[1, 3, 1], 1.0);
        let (_, dx) = sample_bilinear_x_backward(&img, &xs, &g, false, true).unwrap();
        // x=1 → cell [0,1]; x=0 → only cell [0,1]; x=2 → cell [1,2].
        assert_eq!(dx.unwrap().data(), &[1.0, 1.0, 4.0]);
    }

    #[test]
    fn rejects_mismatched_coordinates() {
        assert!(sample_bilinear_x(&row(&[0.0, 1.0]), &coords(&[0.0])).is_err());
    }
}

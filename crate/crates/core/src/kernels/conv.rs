//! SAME-padded 2D/3D convolution and its transpose via im2col + GEMM.
//!
//! Both ranks share one code path: a 2D image `H×W×C` is treated as a
//! volume with depth 1 and a kernel of depth 1. Kernels are stored as
//! `[kd, kh, kw, Cin, Cout]` (`[kh, kw, Cin, Cout]` for 2D), which flattens
//! to the `K×Cout` matrix used by the GEMM, `K = kd·kh·kw·Cin`.
//!
//! A transposed convolution with kernel `[k.., Cx, Cy]` maps `Cy` channels
//! back to `Cx` and is the exact adjoint of the forward convolution that
//! maps `Cx → Cy`.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Upper bound on im2col buffer elements per chunk.
const COL_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    /// Spatial dims `[d, h, w]` on the convolution input side.
    pub input: [usize; 3],
    /// Spatial dims on the convolution output side.
    pub output: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    /// Zero padding in front of each axis.
    pub pad: [usize; 3],
    pub cin: usize,
    pub cout: usize,
}

impl ConvGeometry {
    /// SAME padding: `out = ceil(in / stride)`, total padding split with the
    /// extra cell (if any) at the end.
    pub fn same(
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        cin: usize,
        cout: usize,
    ) -> Self {
        let mut output = [0; 3];
        let mut pad = [0; 3];
        for a in 0..3 {
            output[a] = input[a].div_ceil(stride[a]);
            let needed = (output[a] - 1) * stride[a] + kernel[a];
            pad[a] = needed.saturating_sub(input[a]) / 2;
        }
        Self {
            input,
            output,
            kernel,
            stride,
            pad,
            cin,
            cout,
        }
    }

    pub fn rows(&self) -> usize {
        self.output.iter().product()
    }

    pub fn cols(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.cin
    }

    fn chunk_rows(&self) -> usize {
        (COL_BUDGET / self.cols().max(1)).clamp(1, self.rows())
    }

    fn input_len(&self) -> usize {
        self.input.iter().product::<usize>() * self.cin
    }
}

/// Splits a tensor shape into `[d, h, w]` plus channels for rank-2 (`H×W×C`)
/// or rank-3 (`D×H×W×C`) convolution inputs.
pub fn spatial_dims(shape: &[usize]) -> Option<([usize; 3], usize)> {
    match *shape {
        [h, w, c] => Some(([1, h, w], c)),
        [d, h, w, c] => Some(([d, h, w], c)),
        _ => None,
    }
}

fn output_shape(input_rank: usize, spatial: [usize; 3], channels: usize) -> Vec<usize> {
    if input_rank == 3 {
        vec![spatial[1], spatial[2], channels]
    } else {
        vec![spatial[0], spatial[1], spatial[2], channels]
    }
}

/// Kernel spatial extent and its two channel counts `(first, second)`.
fn kernel_dims(
    op: &'static str,
    input_rank: usize,
    kernel: &[usize],
) -> Result<([usize; 3], usize, usize)> {
    let dims = match (input_rank, kernel) {
        (3, &[kh, kw, a, b]) => ([1, kh, kw], a, b),
        (4, &[kd, kh, kw, a, b]) => ([kd, kh, kw], a, b),
        _ => {
            return Err(shape_err(
                op,
                format!("kernel {kernel:?} does not fit a rank-{} input", input_rank),
            ))
        }
    };
    if dims.0.iter().any(|k| k % 2 == 0) {
        return Err(shape_err(op, format!("kernel spatial dims must be odd: {kernel:?}")));
    }
    Ok(dims)
}

fn stride3(input_rank: usize, stride: usize) -> [usize; 3] {
    if input_rank == 3 {
        [1, stride, stride]
    } else {
        [stride; 3]
    }
}

/// Geometry of the forward convolution described by `input`/`kernel` shapes.
pub fn conv_geometry(input: &[usize], kernel: &[usize], stride: usize) -> Result<ConvGeometry> {
    let (spatial, cin) = spatial_dims(input)
        .ok_or_else(|| shape_err("conv", format!("input must be H×W×C or D×H×W×C, got {input:?}")))?;
    if stride == 0 {
        return Err(shape_err("conv", "stride must be positive"));
    }
    let (k, kin, kout) = kernel_dims("conv", input.len(), kernel)?;
    if kin != cin {
        return Err(shape_err(
            "conv",
            format!("kernel expects {kin} input channels, input {input:?} has {cin}"),
        ));
    }
    Ok(ConvGeometry::same(spatial, k, stride3(input.len(), stride), cin, kout))
}

/// Geometry of the convolution whose adjoint maps `input` (the conv output
/// side) to a tensor with spatial dims `out_spatial`.
pub fn conv_transpose_geometry(
    input: &[usize],
    kernel: &[usize],
    stride: usize,
    out_spatial: Option<[usize; 3]>,
) -> Result<ConvGeometry> {
    let (spatial, cy) = spatial_dims(input).ok_or_else(|| {
        shape_err(
            "conv_transpose",
            format!("input must be H×W×C or D×H×W×C, got {input:?}"),
        )
    })?;
    if !(1..=2).contains(&stride) {
        return Err(shape_err("conv_transpose", format!("stride must be 1 or 2, got {stride}")));
    }
    let (k, cx, kin) = kernel_dims("conv_transpose", input.len(), kernel)?;
    if kin != cy {
        return Err(shape_err(
            "conv_transpose",
            format!("kernel expects {kin} input channels, input {input:?} has {cy}"),
        ));
    }
    let s = stride3(input.len(), stride);
    let target = out_spatial.unwrap_or([spatial[0] * s[0], spatial[1] * s[1], spatial[2] * s[2]]);
    let g = ConvGeometry::same(target, k, s, cx, cy);
    if g.output != spatial {
        return Err(shape_err(
            "conv_transpose",
            format!("output dims {target:?} are incompatible with input {spatial:?} at stride {stride}"),
        ));
    }
    Ok(g)
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, r0: usize, r1: usize, col: &mut [T]) {
    let [_, oh, ow] = g.output;
    let [id_, ih_, iw_] = g.input;
    let cols = g.cols();
    let cin = g.cin;
    for r in r0..r1 {
        let od = r / (oh * ow);
        let oy = (r / ow) % oh;
        let ox = r % ow;
        let dst = &mut col[(r - r0) * cols..(r - r0 + 1) * cols];
        let mut idx = 0;
        for kd in 0..g.kernel[0] {
            let zd = (od * g.stride[0] + kd) as isize - g.pad[0] as isize;
            for kh in 0..g.kernel[1] {
                let zy = (oy * g.stride[1] + kh) as isize - g.pad[1] as isize;
                for kw in 0..g.kernel[2] {
                    let zx = (ox * g.stride[2] + kw) as isize - g.pad[2] as isize;
                    let cell = &mut dst[idx..idx + cin];
                    if zd >= 0
                        && zy >= 0
                        && zx >= 0
                        && (zd as usize) < id_
                        && (zy as usize) < ih_
                        && (zx as usize) < iw_
                    {
                        let src = ((zd as usize * ih_ + zy as usize) * iw_ + zx as usize) * cin;
                        cell.copy_from_slice(&x[src..src + cin]);
                    } else {
                        cell.fill(T::zero());
                    }
                    idx += cin;
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeometry, r0: usize, r1: usize, x: &mut [T]) {
    let [_, oh, ow] = g.output;
    let [id_, ih_, iw_] = g.input;
    let cols = g.cols();
    let cin = g.cin;
    for r in r0..r1 {
        let od = r / (oh * ow);
        let oy = (r / ow) % oh;
        let ox = r % ow;
        let src = &col[(r - r0) * cols..(r - r0 + 1) * cols];
        let mut idx = 0;
        for kd in 0..g.kernel[0] {
            let zd = (od * g.stride[0] + kd) as isize - g.pad[0] as isize;
            for kh in 0..g.kernel[1] {
                let zy = (oy * g.stride[1] + kh) as isize - g.pad[1] as isize;
                for kw in 0..g.kernel[2] {
                    let zx = (ox * g.stride[2] + kw) as isize - g.pad[2] as isize;
                    if zd >= 0
                        && zy >= 0
                        && zx >= 0
                        && (zd as usize) < id_
                        && (zy as usize) < ih_
                        && (zx as usize) < iw_
                    {
                        let dst = ((zd as usize * ih_ + zy as usize) * iw_ + zx as usize) * cin;
                        for (d, &s) in x[dst..dst + cin].iter_mut().zip(&src[idx..idx + cin]) {
                            *d += s;
                        }
                    }
                    idx += cin;
                }
            }
        }
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    for px in out.chunks_exact_mut(bias.len()) {
        for (o, &b) in px.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn channel_sums<T: Scalar>(grad: &[T], channels: usize) -> Vec<T> {
    let mut sums = vec![T::zero(); channels];
    for px in grad.chunks_exact(channels) {
        for (s, &g) in sums.iter_mut().zip(px) {
            *s += g;
        }
    }
    sums
}

fn check_bias<T: Scalar>(op: &'static str, bias: &Tensor<T>, channels: usize) -> Result<()> {
    if bias.len() != channels {
        return Err(shape_err(
            op,
            format!("bias has {} entries, expected {channels}", bias.len()),
        ));
    }
    Ok(())
}

/// `y = conv(x, k) + b` with SAME zero padding.
pub fn conv<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = conv_geometry(input.shape(), kernel.shape(), stride)?;
    check_bias("conv", bias, g.cout)?;
    let mut out = vec![T::zero(); g.rows() * g.cout];
    conv_forward_raw(input.data(), kernel.data(), &g, &mut out);
    add_channel_bias(&mut out, bias.data());
    Tensor::from_vec(&output_shape(input.rank(), g.output, g.cout), out)
}

fn conv_forward_raw<T: Scalar>(x: &[T], w: &[T], g: &ConvGeometry, out: &mut [T]) {
    let chunk = g.chunk_rows();
    let (cols, cout) = (g.cols(), g.cout);
    out.par_chunks_mut(chunk * cout)
        .enumerate()
        .for_each(|(i, dst)| {
            let r0 = i * chunk;
            let rows = dst.len() / cout;
            let mut col = vec![T::zero(); rows * cols];
            im2col(x, g, r0, r0 + rows, &mut col);
            // SAFETY: col is rows×cols, w is cols×cout, dst is rows×cout.
            unsafe {
                T::gemm(
                    rows,
                    cols,
                    cout,
                    T::one(),
                    col.as_ptr(),
                    cols as isize,
                    1,
                    w.as_ptr(),
                    cout as isize,
                    1,
                    T::zero(),
                    dst.as_mut_ptr(),
                    cout as isize,
                    1,
                );
            }
        });
}

/// Gradients of [`conv`] with respect to the input, kernel and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Input/kernel gradients are only materialized when requested.
pub fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    want_input: bool,
    want_params: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(input.shape(), kernel.shape(), stride)?;
    let (cols, cout) = (g.cols(), g.cout);
    let dy = grad_out.data();
    let w = kernel.data();
    let x = input.data();
    let mut dx = want_input.then(|| vec![T::zero(); g.input_len()]);
    let mut dw = want_params.then(|| vec![T::zero(); cols * cout]);
    let chunk = g.chunk_rows();
    let mut col = vec![T::zero(); chunk * cols];
    let mut r0 = 0;
    while r0 < g.rows() {
        let r1 = (r0 + chunk).min(g.rows());
        let rows = r1 - r0;
        let dy_chunk = &dy[r0 * cout..r1 * cout];
        if let Some(dw) = dw.as_mut() {
            im2col(x, &g, r0, r1, &mut col[..rows * cols]);
            // SAFETY: colᵀ is cols×rows, dy_chunk rows×cout, dw cols×cout.
            unsafe {
                T::gemm(
                    cols,
                    rows,
                    cout,
                    T::one(),
                    col.as_ptr(),
                    1,
                    cols as isize,
                    dy_chunk.as_ptr(),
                    cout as isize,
                    1,
                    T::one(),
                    dw.as_mut_ptr(),
                    cout as isize,
                    1,
                );
            }
        }
        if let Some(dx) = dx.as_mut() {
            // SAFETY: dy_chunk rows×cout, wᵀ cout×cols, col rows×cols.
            unsafe {
                T::gemm(
                    rows,
                    cout,
                    cols,
                    T::one(),
                    dy_chunk.as_ptr(),
                    cout as isize,
                    1,
                    w.as_ptr(),
                    1,
                    cout as isize,
                    T::zero(),
                    col.as_mut_ptr(),
                    cols as isize,
                    1,
                );
            }
            col2im(&col[..rows * cols], &g, r0, r1, dx);
        }
        r0 = r1;
    }
    Ok(ConvGrads {
        input: dx
            .map(|d| Tensor::from_vec(input.shape(), d))
            .transpose()?,
        kernel: dw
            .map(|d| Tensor::from_vec(kernel.shape(), d))
            .transpose()?,
        bias: want_params
            .then(|| Tensor::from_vec(&[cout], channel_sums(dy, cout)))
            .transpose()?,
    })
}

/// Transposed convolution; output spatial dims are `stride × input`.
pub fn conv_transpose<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    conv_transpose_to(input, kernel, bias, stride, None)
}

/// Transposed convolution with an explicit output size, which must map back
/// onto `input` under a SAME convolution at `stride`.
pub fn conv_transpose_to<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    out_spatial: Option<[usize; 3]>,
) -> Result<Tensor<T>> {
    let g = conv_transpose_geometry(input.shape(), kernel.shape(), stride, out_spatial)?;
    check_bias("conv_transpose", bias, g.cin)?;
    let (cols, cy) = (g.cols(), g.cout);
    let y = input.data();
    let w = kernel.data();
    let mut out = vec![T::zero(); g.input_len()];
    let chunk = g.chunk_rows();
    let mut col = vec![T::zero(); chunk * cols];
    let mut r0 = 0;
    while r0 < g.rows() {
        let r1 = (r0 + chunk).min(g.rows());
        let rows = r1 - r0;
        // SAFETY: y chunk rows×cy, wᵀ cy×cols, col rows×cols.
        unsafe {
            T::gemm(
                rows,
                cy,
                cols,
                T::one(),
                y[r0 * cy..].as_ptr(),
                cy as isize,
                1,
                w.as_ptr(),
                1,
                cy as isize,
                T::zero(),
                col.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
        col2im(&col[..rows * cols], &g, r0, r1, &mut out);
        r0 = r1;
    }
    add_channel_bias(&mut out, bias.data());
    Tensor::from_vec(&output_shape(input.rank(), g.input, g.cin), out)
}

pub fn conv_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    want_input: bool,
    want_params: bool,
) -> Result<ConvGrads<T>> {
    let (out_spatial, _) = spatial_dims(grad_out.shape())
        .ok_or_else(|| shape_err("conv_transpose", "gradient rank"))?;
    let g = conv_transpose_geometry(input.shape(), kernel.shape(), stride, Some(out_spatial))?;
    let (cols, cy) = (g.cols(), g.cout);
    let y = input.data();
    let w = kernel.data();
    let dout = grad_out.data();
    let mut dy = want_input.then(|| vec![T::zero(); g.rows() * cy]);
    let mut dw = want_params.then(|| vec![T::zero(); cols * cy]);
    let chunk = g.chunk_rows();
    let mut col = vec![T::zero(); chunk * cols];
    let mut r0 = 0;
    while r0 < g.rows() {
        let r1 = (r0 + chunk).min(g.rows());
        let rows = r1 - r0;
        im2col(dout, &g, r0, r1, &mut col[..rows * cols]);
        if let Some(dy) = dy.as_mut() {
            // SAFETY: col rows×cols, w cols×cy, dy chunk rows×cy.
            unsafe {
                T::gemm(
                    rows,
                    cols,
                    cy,
                    T::one(),
                    col.as_ptr(),
                    cols as isize,
                    1,
                    w.as_ptr(),
                    cy as isize,
                    1,
                    T::zero(),
                    dy[r0 * cy..].as_mut_ptr(),
                    cy as isize,
                    1,
                );
            }
        }
        if let Some(dw) = dw.as_mut() {
            // SAFETY: colᵀ cols×rows, y chunk rows×cy, dw cols×cy.
            unsafe {
                T::gemm(
                    cols,
                    rows,
                    cy,
                    T::one(),
                    col.as_ptr(),
                    1,
                    cols as isize,
                    y[r0 * cy..].as_ptr(),
                    cy as isize,
                    1,
                    T::one(),
                    dw.as_mut_ptr(),
                    cy as isize,
                    1,
                );
            }
        }
        r0 = r1;
    }
    Ok(ConvGrads {
        input: dy
            .map(|d| Tensor::from_vec(input.shape(), d))
            .transpose()?,
        kernel: dw
            .map(|d| Tensor::from_vec(kernel.shape(), d))
            .transpose()?,
        bias: want_params
            .then(|| Tensor::from_vec(&[g.cin], channel_sums(dout, g.cin)))
            .transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Nested-loop 2D convolution with explicit zero padding.
    fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Tensor<f64> {
        let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw, cout) = (k.shape()[0], k.shape()[1], k.shape()[3]);
        let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
        let pad_h = ((oh - 1) * stride + kh).saturating_sub(h) / 2;
        let pad_w = ((ow - 1) * stride + kw).saturating_sub(w) / 2;
        let ph = h + 2 * kh;
        let pw = w + 2 * kw;
        let mut padded = vec![0.0; ph * pw * cin];
        for y in 0..h {
            for xx in 0..w {
                for c in 0..cin {
                    padded[((y + kh) * pw + xx + kw) * cin + c] = x.get(&[y, xx, c]);
                }
            }
        }
        let mut out = Tensor::zeros(&[oh, ow, cout]);
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..cout {
                    let mut acc = b.data()[o];
                    for i in 0..kh {
                        for j in 0..kw {
                            for c in 0..cin {
                                let py = oy * stride + i + kh - pad_h;
                                let px = ox * stride + j + kw - pad_w;
                                acc += padded[(py * pw + px) * cin + c] * k.get(&[i, j, c, o]);
                            }
                        }
                    }
                    out.set(&[oy, ox, o], acc);
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1], vec![3.0]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv(&x, &k, &b, 1).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn same_padding_stride_two_shape() {
        let x = Tensor::<f32>::zeros(&[4, 4, 1]);
        let k = Tensor::zeros(&[3, 3, 1, 5]);
        let y = conv(&x, &k, &Tensor::zeros(&[5]), 2).unwrap();
        assert_eq!(y.shape(), &[2, 2, 5]);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, ksize) in &[(1, 3), (2, 3), (2, 5), (1, 1)] {
            let x = random(&[5, 5, 2], &mut rng);
            let k = random(&[ksize, ksize, 2, 3], &mut rng);
            let b = random(&[3], &mut rng);
            let fast = conv(&x, &k, &b, stride).unwrap();
            let slow = naive_conv2d(&x, &k, &b, stride);
            assert_eq!(fast.shape(), slow.shape());
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        let err = conv(&x, &k, &Tensor::zeros(&[1]), 1).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
    }

    #[test]
    fn rejects_even_kernel() {
        let x = Tensor::<f32>::zeros(&[4, 4, 1]);
        let k = Tensor::zeros(&[2, 2, 1, 1]);
        assert!(conv(&x, &k, &Tensor::zeros(&[1]), 1).is_err());
    }

    #[test]
    fn transpose_doubles_shape() {
        let y = Tensor::<f32>::zeros(&[2, 2, 1]);
        let k = Tensor::zeros(&[3, 3, 4, 1]);
        let x = conv_transpose(&y, &k, &Tensor::zeros(&[4]), 2).unwrap();
        assert_eq!(x.shape(), &[4, 4, 4]);
        let v = Tensor::<f32>::zeros(&[2, 3, 2, 6]);
        let k3 = Tensor::zeros(&[3, 3, 3, 2, 6]);
        let u = conv_transpose(&v, &k3, &Tensor::zeros(&[2]), 2).unwrap();
        assert_eq!(u.shape(), &[4, 6, 4, 2]);
    }

    #[test]
    fn transpose_rejects_incompatible_output() {
        let y = Tensor::<f32>::zeros(&[2, 2, 1]);
        let k = Tensor::zeros(&[3, 3, 1, 1]);
        let err = conv_transpose_to(&y, &k, &Tensor::zeros(&[1]), 2, Some([1, 6, 6]));
        assert!(err.is_err());
        // ceil(3/2) == 2, so a 3×3 target is reachable.
        assert!(conv_transpose_to(&y, &k, &Tensor::zeros(&[1]), 2, Some([1, 3, 3])).is_ok());
        assert!(conv_transpose(&y, &k, &Tensor::zeros(&[1]), 3).is_err());
    }

    #[test]
    fn impulse_response_stamps_kernel() {
        // Transposed conv at stride 1 scatters each input value through the
        // kernel, centred on the input location.
        let mut y = Tensor::<f64>::zeros(&[5, 5, 1]);
        y.set(&[2, 2, 0], 1.0);
        let k = Tensor::from_fn(&[3, 3, 1, 1], |i| (i + 1) as f64);
        let x = conv_transpose(&y, &k, &Tensor::zeros(&[1]), 1).unwrap();
        for dy in 0..3 {
            for dx in 0..3 {
                let expect = k.get(&[dy, dx, 0, 0]);
                assert_eq!(x.get(&[1 + dy, 1 + dx, 0]), expect);
            }
        }
        assert_eq!(x.sum(), k.sum());
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for stride in [1, 2] {
            let x = random(&[4, 4, 2], &mut rng);
            let k = random(&[3, 3, 2, 3], &mut rng);
            let zero3 = Tensor::zeros(&[3]);
            let cx = conv(&x, &k, &zero3, stride).unwrap();
            let y = random(cx.shape(), &mut rng);
            let aty = conv_transpose_to(&y, &k, &Tensor::zeros(&[2]), stride, Some([1, 4, 4])).unwrap();
            let lhs = cx.dot(&y);
            let rhs = x.dot(&aty);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn chunked_backward_matches_single_chunk() {
        // A geometry large enough to need several chunks.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[6, 40, 48, 8], &mut rng);
        let k = random(&[3, 3, 3, 8, 4], &mut rng);
        let g = conv_geometry(x.shape(), k.shape(), 1).unwrap();
        assert!(g.chunk_rows() < g.rows());
        let y = conv(&x, &k, &Tensor::zeros(&[4]), 1).unwrap();
        let dy = random(y.shape(), &mut rng);
        let grads = conv_backward(&x, &k, 1, &dy, true, true).unwrap();
        let probe = random(x.shape(), &mut rng);
        // ⟨dx, probe⟩ == ⟨dy, conv(probe)⟩
        let lhs = grads.input.unwrap().dot(&probe);
        let rhs = dy.dot(&conv(&probe, &k, &Tensor::zeros(&[4]), 1).unwrap());
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
    }
}

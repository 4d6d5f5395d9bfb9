//! Perceptually parameterized disparity colormap through the RGB cube
//! vertices black, red, yellow, green, cyan, blue, magenta, white.
//!
//! Each stop sits at the cumulative CIE76 colour difference from black,
//! normalized to `[0, 1]`, so equal steps in input cover equal ΔE between
//! stops. Colours between stops are blended linearly in RGB.

use crate::disparity::DisparityMap;
use crate::tensor::Tensor;

pub const STOPS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
];

pub const INVALID_COLOR: [f32; 3] = [0.5, 0.5, 0.5];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in `[0, 1]` to CIELAB under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    // Reference white of the matrix above.
    let (xn, yn, zn) = (0.950_47, 1.0, 1.088_83);
    let f = |t: f64| {
        let d = 6.0 / 29.0;
        if t > d * d * d {
            t.cbrt()
        } else {
            t / (3.0 * d * d) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / xn), f(y / yn), f(z / zn));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn delta_e76(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (la, lb) = (srgb_to_lab(a), srgb_to_lab(b));
    la.iter().zip(&lb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColormapLut {
    pub stops: [[f64; 3]; 8],
    /// Strictly increasing, `positions[0] == 0`, `positions[7] == 1`.
    pub positions: [f64; 8],
}

pub fn build_colormap() -> ColormapLut {
    let mut positions = [0.0; 8];
    for i in 1..8 {
        positions[i] = positions[i - 1] + delta_e76(STOPS[i - 1], STOPS[i]);
    }
    let total = positions[7];
    for p in &mut positions {
        *p /= total;
    }
    positions[7] = 1.0;
    ColormapLut {
        stops: STOPS,
        positions,
    }
}

impl ColormapLut {
    /// Colour at normalized position `t` (clamped to `[0, 1]`).
    pub fn color_at(&self, t: f64) -> [f64; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let seg = (0..7)
            .find(|&i| t <= self.positions[i + 1])
            .unwrap_or(6);
        let (p0, p1) = (self.positions[seg], self.positions[seg + 1]);
        let u = (t - p0) / (p1 - p0);
        let (a, b) = (self.stops[seg], self.stops[seg + 1]);
        [0, 1, 2].map(|c| a[c] + u * (b[c] - a[c]))
    }
}

/// Colour mapping options for [`colorize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorizeRange {
    pub d_min: f32,
    pub d_max: f32,
    /// Map large disparities to black instead of white.
    pub reverse: bool,
}

/// `H×W×3` rendering over a fixed global disparity range; invalid pixels
/// are 50 % gray.
pub fn colorize(lut: &ColormapLut, map: &DisparityMap, range: ColorizeRange) -> Tensor<f32> {
    assert!(range.d_max > range.d_min, "d_max must exceed d_min");
    let span = f64::from(range.d_max - range.d_min);
    let (h, w) = (map.height(), map.width());
    let mut out = Vec::with_capacity(h * w * 3);
    for (&d, &ok) in map.values().data().iter().zip(map.valid()) {
        if !ok {
            out.extend(INVALID_COLOR);
            continue;
        }
        let mut t = f64::from(d - range.d_min) / span;
        if range.reverse {
            t = 1.0 - t;
        }
        out.extend(lut.color_at(t).map(|c| c as f32));
    }
    Tensor::from_vec(&[h, w, 3], out).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lab_of_black_and_white() {
        let k = srgb_to_lab([0.0; 3]);
        let w = srgb_to_lab([1.0; 3]);
        assert!(k.iter().all(|v| v.abs() < 1e-9));
        assert!((w[0] - 100.0).abs() < 1e-3 && w[1].abs() < 1e-3 && w[2].abs() < 1e-3);
    }

    #[test]
    fn known_lab_value_of_red() {
        // Published sRGB red: L* 53.24, a* 80.09, b* 67.20.
        let r = srgb_to_lab([1.0, 0.0, 0.0]);
        assert!((r[0] - 53.24).abs() < 0.01);
        assert!((r[1] - 80.09).abs() < 0.01);
        assert!((r[2] - 67.20).abs() < 0.01);
    }

    #[test]
    fn red_to_yellow_midpoint() {
        let lut = build_colormap();
        let mid = (lut.positions[1] + lut.positions[2]) / 2.0;
        let c = lut.color_at(mid);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12 && c[2].abs() < 1e-12);
    }

    #[test]
    fn endpoints_and_sentinel() {
        let lut = build_colormap();
        let map = DisparityMap::new(
            Tensor::from_vec(&[1, 3], vec![2.0, 10.0, 5.0]).unwrap(),
            vec![true, true, false],
        )
        .unwrap();
        let range = ColorizeRange {
            d_min: 2.0,
            d_max: 10.0,
            reverse: false,
        };
        let img = colorize(&lut, &map, range);
        assert_eq!(img.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5]);
        let rev = colorize(&lut, &map, ColorizeRange { reverse: true, ..range });
        assert_eq!(&rev.data()[..6], &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}

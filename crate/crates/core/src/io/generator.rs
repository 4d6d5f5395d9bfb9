//! Synthetic layered stereograms with exact ground truth.
//!
//! A random texture is drawn for the right view and a piecewise disparity
//! field for the left view. The left view is then rendered by sampling the
//! right one at `x + d(x)`. Left pixels whose right-view location is taken
//! by a nearer surface, or lies outside the image, are occluded: they get
//! an independent texture and are invalid in the ground truth. The right
//! ground truth is obtained by forward-mapping the visible left pixels.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::disparity::DisparityMap;
use crate::error::{Error, Result};
use crate::kernels::sampling::sample_bilinear_x;
use crate::tensor::Tensor;

/// Fraction of valid ground-truth pixels kept in the sparse maps.
pub const SPARSE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scene {
    /// Fronto-parallel rectangles over a fronto-parallel background.
    FrontoPlanes,
    /// A background whose disparity varies linearly across the image, plus
    /// one fronto-parallel rectangle.
    Slanted,
    /// Random-dot texture over fronto-parallel rectangles.
    Dots,
}

impl Scene {
    pub const ALL: [Scene; 3] = [Scene::FrontoPlanes, Scene::Slanted, Scene::Dots];

    pub fn name(self) -> &'static str {
        match self {
            Scene::FrontoPlanes => "fronto_planes",
            Scene::Slanted => "slanted",
            Scene::Dots => "dots",
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scene::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scene {s:?}")))
    }
}

/// Rectified pair with optional ground truth, images in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub id: String,
    pub left: Tensor<f32>,
    pub right: Tensor<f32>,
    pub gt_left: Option<DisparityMap>,
    pub gt_right: Option<DisparityMap>,
}

impl StereoSample {
    pub fn height(&self) -> usize {
        self.left.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.left.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stereogram {
    /// The pair with dense ground truth.
    pub sample: StereoSample,
    pub sparse_left: DisparityMap,
    pub sparse_right: DisparityMap,
}

impl Stereogram {
    /// The same pair carrying the sparse maps as its ground truth.
    pub fn sparse_sample(&self) -> StereoSample {
        StereoSample {
            gt_left: Some(self.sparse_left.clone()),
            gt_right: Some(self.sparse_right.clone()),
            ..self.sample.clone()
        }
    }
}

struct Rect {
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
    d: f64,
}

fn random_rects(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: usize, hi: usize, count: usize) -> Vec<Rect> {
    (0..count)
        .map(|_| {
            let rw = rng.gen_range((w / 8).max(1)..=(w / 3).max(1));
            let rh = rng.gen_range((h / 4).max(1)..=(h / 2).max(1));
            let x0 = rng.gen_range(0..=w - rw);
            let y0 = rng.gen_range(0..=h - rh);
            Rect {
                y0,
                y1: y0 + rh,
                x0,
                x1: x0 + rw,
                d: rng.gen_range(lo..=hi) as f64,
            }
        })
        .collect()
}

fn disparity_field(rng: &mut ChaCha8Rng, scene: Scene, h: usize, w: usize, max_d: usize) -> Vec<f64> {
    let lo = max_d.min(1);
    let mut d = vec![0.0; h * w];
    let rects = match scene {
        Scene::FrontoPlanes | Scene::Dots => {
            let bg = rng.gen_range(lo..=max_d) as f64;
            d.fill(bg);
            let n = rng.gen_range(1..=3);
            random_rects(rng, h, w, lo, max_d, n)
        }
        Scene::Slanted => {
            let a = rng.gen_range(lo as f64..=max_d as f64);
            let b = rng.gen_range(lo as f64..=max_d as f64);
            for y in 0..h {
                for x in 0..w {
                    let t = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.0 };
                    d[y * w + x] = a + t * (b - a);
                }
            }
            random_rects(rng, h, w, lo, max_d, 1)
        }
    };
    for r in rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let v = &mut d[y * w + x];
                *v = v.max(r.d);
            }
        }
    }
    d
}

fn blur_121(img: &mut [f32], h: usize, w: usize, c: usize) {
    let src = img.to_vec();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let at = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                img[(y * w + x) * c + ch] = 0.25 * at(y, xl) + 0.5 * at(y, x) + 0.25 * at(y, xr);
            }
        }
    }
    let src = img.to_vec();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let at = |yy: usize| src[(yy * w + x) * c + ch];
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                img[(y * w + x) * c + ch] = 0.25 * at(yu) + 0.5 * at(y) + 0.25 * at(yd);
            }
        }
    }
}

fn texture(rng: &mut ChaCha8Rng, scene: Scene, h: usize, w: usize) -> Vec<f32> {
    match scene {
        Scene::Dots => {
            let bg: f32 = rng.gen_range(0.2..0.8);
            let mut t = Vec::with_capacity(h * w * 3);
            for _ in 0..h * w {
                if rng.gen_bool(0.5) {
                    t.extend([rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()]);
                } else {
                    t.extend([bg; 3]);
                }
            }
            t
        }
        _ => {
            let mut t: Vec<f32> = (0..h * w * 3).map(|_| rng.gen()).collect();
            blur_121(&mut t, h, w, 3);
            t
        }
    }
}

/// Generates one stereogram; `max_d` must be below `width / 4`.
pub fn gen_stereogram(seed: u64, height: usize, width: usize, max_d: usize, scene: Scene) -> Result<Stereogram> {
    if height == 0 || width == 0 {
        return Err(Error::Config("stereogram dimensions must be positive".into()));
    }
    if 4 * max_d >= width && max_d > 0 {
        return Err(Error::Config(format!(
            "max disparity {max_d} must be below width / 4 = {}",
            width as f64 / 4.0
        )));
    }
    let (h, w) = (height, width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = disparity_field(&mut rng, scene, h, w, max_d);
    let right = Tensor::from_vec(&[h, w, 3], texture(&mut rng, scene, h, w))?;
    let hidden = texture(&mut rng, scene, h, w);

    let xs = Tensor::from_fn(&[h, w], |i| (i % w) as f32 + d[i] as f32);
    let mut left = sample_bilinear_x(&right, &xs)?;

    let mut valid_l = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let xr = xs.data()[i] as f64;
            let in_view = xr <= (w - 1) as f64;
            let occluded = (0..x).any(|xp| {
                let j = y * w + xp;
                d[j] > d[i] + 1e-9 && (xs.data()[j] as f64 - xr).abs() < 1.0
            });
            valid_l[i] = in_view && !occluded;
            if !valid_l[i] {
                left.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&hidden[i * 3..i * 3 + 3]);
            }
        }
    }

    let mut d_r = vec![f64::NEG_INFINITY; h * w];
    for y in 0..h {
        let row = y * w;
        let mut splat = |xr: f64, v: f64| {
            if xr >= 0.0 && xr <= (w - 1) as f64 && xr.fract() == 0.0 {
                let k = row + xr as usize;
                d_r[k] = d_r[k].max(v);
            }
        };
        for x in 0..w {
            let i = row + x;
            if !valid_l[i] {
                continue;
            }
            let p0 = x as f64 + d[i];
            splat(p0, d[i]);
            if x + 1 < w && valid_l[i + 1] && (d[i + 1] - d[i]).abs() < 1.0 {
                let p1 = (x + 1) as f64 + d[i + 1];
                let mut xr = p0.floor() + 1.0;
                while xr < p1 {
                    let t = (xr - p0) / (p1 - p0);
                    splat(xr, d[i] + t * (d[i + 1] - d[i]));
                    xr += 1.0;
                }
            }
        }
    }

    let to_map = |values: Vec<f64>, valid: Vec<bool>| -> Result<DisparityMap> {
        let vals = values
            .iter()
            .zip(&valid)
            .map(|(&v, &ok)| if ok { v as f32 } else { 0.0 })
            .collect();
        DisparityMap::new(Tensor::from_vec(&[h, w], vals)?, valid)
    };
    let valid_r: Vec<bool> = d_r.iter().map(|v| v.is_finite()).collect();
    let gt_left = to_map(d, valid_l)?;
    let gt_right = to_map(d_r, valid_r)?;

    let mut sparse_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a5e);
    let mut sparsify = |m: &DisparityMap| -> Result<DisparityMap> {
        let keep: Vec<bool> = m
            .valid()
            .iter()
            .map(|&v| sparse_rng.gen_bool(SPARSE_FRACTION) && v)
            .collect();
        let vals = m
            .values()
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect();
        DisparityMap::new(Tensor::from_vec(&[h, w], vals)?, keep)
    };
    let sparse_left = sparsify(&gt_left)?;
    let sparse_right = sparsify(&gt_right)?;

    Ok(Stereogram {
        sample: StereoSample {
            id: format!("{}_{seed}", scene.name()),
            left,
            right,
            gt_left: Some(gt_left),
            gt_right: Some(gt_right),
        },
        sparse_left,
        sparse_right,
    })
}

/// Removes the top `fraction` of rows (rounded) from an `H×W[×C]` tensor.
pub fn crop_top(t: &Tensor<f32>, fraction: f64) -> Result<Tensor<f32>> {
    let h = t.shape()[0];
    let cut = (h as f64 * fraction).round() as usize;
    if cut >= h {
        return Err(Error::Config(format!("crop of {fraction} removes all {h} rows")));
    }
    let row: usize = t.shape()[1..].iter().product();
    let mut shape = t.shape().to_vec();
    shape[0] = h - cut;
    Tensor::from_vec(&shape, t.data()[cut * row..].to_vec())
}

/// Upper-image fraction removed for the ground-truth-only setting.
pub const LIDAR_CROP_FRACTION: f64 = 0.378;

pub fn crop_disparity_top(m: &DisparityMap, fraction: f64) -> Result<DisparityMap> {
    let values = crop_top(m.values(), fraction)?;
    let skip = m.valid().len() - values.len();
    DisparityMap::new(values, m.valid()[skip..].to_vec())
}

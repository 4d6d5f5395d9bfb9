use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use stereokit::io::colormap::{build_colormap, colorize, ColorizeRange};
use stereokit::io::dataset::load_image;
use stereokit::io::pnm::{encode_disparity, encode_image};
use stereokit::train::load_checkpoint;
use stereokit::DisparityMap;

use crate::ThreadArgs;

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    /// 16-bit disparity output for the left view.
    #[arg(long)]
    pub out_disparity: PathBuf,
    /// Optional 16-bit disparity output for the right view.
    #[arg(long)]
    pub out_right: Option<PathBuf>,
    /// Also write a color image mapping MIN..MAX onto the colormap.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub colorize: Option<Vec<f32>>,
    /// Color image path; defaults to the disparity path with a `.ppm` extension.
    #[arg(long)]
    pub colorize_out: Option<PathBuf>,
    /// Map larger disparities to earlier colormap stops.
    #[arg(long)]
    pub reverse: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn run(a: InferArgs) -> Result<ExitCode> {
    super::init_threads(a.threads.threads, None)?;
    let range = match a.colorize.as_deref() {
        Some(&[d_min, d_max]) => {
            if !(d_max > d_min) {
                bail!("--colorize needs MIN < MAX, got {d_min} {d_max}");
            }
            Some(ColorizeRange {
                d_min,
                d_max,
                reverse: a.reverse,
            })
        }
        _ => None,
    };
    let ckpt = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let model = ckpt.into_model()?;
    let left = load_image(&a.left)?;
    let right = load_image(&a.right)?;
    let c = model.config();
    let want = [c.height, c.width, c.channels];
    for (name, img) in [("left", &left), ("right", &right)] {
        if img.shape() != want {
            bail!(
                "{name} image is {:?} (H×W×C) but the checkpoint expects {want:?}",
                img.shape()
            );
        }
    }
    let (dl, dr) = model.predict(&left, &right)?;
    write(&a.out_disparity, encode_disparity(&dl))?;
    if let Some(path) = &a.out_right {
        let Some(dr) = &dr else {
            bail!("variant {} predicts no right disparity", c.variant);
        };
        write(path, encode_disparity(dr))?;
    }
    if let Some(range) = range {
        let path = a
            .colorize_out
            .clone()
            .unwrap_or_else(|| a.out_disparity.with_extension("ppm"));
        write(&path, encode_image(&colorize(&build_colormap(), &dl, range))?)?;
    }
    summarize(&dl);
    Ok(ExitCode::SUCCESS)
}

fn summarize(d: &DisparityMap) {
    let v = d.values().data();
    let (lo, hi) = v.iter().fold((f32::MAX, f32::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    eprintln!("disparity {}x{} range [{lo:.3}, {hi:.3}]", d.width(), d.height());
}

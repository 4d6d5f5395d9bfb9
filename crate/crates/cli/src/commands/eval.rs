use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use stereokit::io::dataset::load_disparity;
use stereokit::metrics::{evaluate, OutlierRule};

pub const EXTENSION: &str = "pgm16";

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of estimated maps, mirroring the ground-truth layout.
    #[arg(long)]
    pub est_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// `or`: outlier when error > 3 px or > 5%; `and`: both must hold.
    #[arg(long, default_value = "or")]
    pub rule: OutlierRule,
    /// Only score ground-truth files with this name, e.g. `disp_left.pgm16`.
    #[arg(long)]
    pub gt_name: Option<String>,
}

/// `.pgm16` files under `root`, as sorted relative paths.
pub fn disparity_files(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path.extension().is_some_and(|e| e == EXTENSION) {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn run(a: EvalArgs) -> Result<ExitCode> {
    let mut gt_files = disparity_files(&a.gt_dir)?;
    if let Some(name) = &a.gt_name {
        gt_files.retain(|p| p.file_name().is_some_and(|f| f == name.as_str()));
    }
    if gt_files.is_empty() {
        bail!("no .{EXTENSION} files under {}", a.gt_dir.display());
    }
    println!("sample,d1_all,epe,evaluated_pixels,outliers");
    let (mut pixels, mut outliers, mut abs_err) = (0usize, 0usize, 0.0f64);
    let mut missing = Vec::new();
    for rel in &gt_files {
        let est_path = a.est_dir.join(rel);
        if !est_path.exists() {
            missing.push(rel.clone());
            continue;
        }
        let gt = load_disparity(&a.gt_dir.join(rel))?;
        let est = load_disparity(&est_path)?;
        let r = evaluate(&est, &gt, a.rule).with_context(|| format!("scoring {}", rel.display()))?;
        println!(
            "{},{:.6},{:.6},{},{}",
            rel.display(),
            r.d1_all,
            r.epe,
            r.evaluated_pixels,
            r.outliers
        );
        pixels += r.evaluated_pixels;
        outliers += r.outliers;
        abs_err += r.epe * r.evaluated_pixels as f64;
    }
    for m in &missing {
        eprintln!("missing estimate: {}", a.est_dir.join(m).display());
    }
    if missing.len() == gt_files.len() {
        bail!("no estimate found for any of {} ground-truth files", gt_files.len());
    }
    if pixels > 0 {
        println!(
            "all,{:.6},{:.6},{pixels},{outliers}",
            100.0 * outliers as f64 / pixels as f64,
            abs_err / pixels as f64
        );
    }
    eprintln!(
        "rule {}: scored {} of {} files",
        a.rule.name(),
        gt_files.len() - missing.len(),
        gt_files.len()
    );
    Ok(ExitCode::SUCCESS)
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use stereokit::io::dataset::{format_manifest, write_stereogram, ManifestEntry, MANIFEST};
use stereokit::io::generator::{gen_stereogram, Scene};

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub count: u64,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Largest ground-truth disparity; must be below width / 4.
    #[arg(long, default_value_t = 12)]
    pub max_disparity: usize,
    /// fronto_planes, slanted or dots.
    #[arg(long, default_value_t = Scene::Dots)]
    pub scene: Scene,
    #[arg(long)]
    pub out: PathBuf,
}

/// Seed of sample `i` in a run seeded with `seed`.
pub fn sample_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i)
}

pub fn run(a: GenDataArgs) -> Result<ExitCode> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut entries = Vec::new();
    for i in 0..a.count {
        let seed = sample_seed(a.seed, i);
        let s = gen_stereogram(seed, a.height, a.width, a.max_disparity, a.scene)?;
        write_stereogram(&a.out, &s)
            .with_context(|| format!("writing sample {} under {}", s.sample.id, a.out.display()))?;
        entries.push(ManifestEntry {
            id: s.sample.id.clone(),
            height: a.height,
            width: a.width,
            max_disparity: a.max_disparity,
            scene: a.scene,
            seed,
        });
    }
    let manifest = a.out.join(MANIFEST);
    fs::write(&manifest, format_manifest(&entries)).with_context(|| format!("writing {}", manifest.display()))?;
    eprintln!("wrote {} samples to {}", entries.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

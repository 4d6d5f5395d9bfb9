//! On-disk sample directories and the dataset manifest.
//!
//! ```text
//! <root>/manifest.csv
//! <root>/<id>/left.ppm
//! <root>/<id>/right.ppm
//! <root>/<id>/disp_left.pgm16     dense ground truth
//! <root>/<id>/disp_right.pgm16
//! <root>/<id>/lidar_left.pgm16    sparse ground truth
//! <root>/<id>/lidar_right.pgm16
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::generator::{Scene, StereoSample, Stereogram};
use crate::io::pnm;

pub const MANIFEST: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "id,height,width,max_disparity,scene,seed";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub max_disparity: usize,
    pub scene: Scene,
    pub seed: u64,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.id, e.height, e.width, e.max_disparity, e.scene, e.seed
        ));
    }
    s
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"_-.".contains(&b))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut offset = 0;
    let mut entries = Vec::new();
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        let bad = |reason: String| Error::Decode { offset: at, reason };
        if n == 0 {
            if line != MANIFEST_HEADER {
                return Err(bad(format!("expected header {MANIFEST_HEADER:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [id, h, w, d, scene, seed] = fields[..] else {
            return Err(bad(format!("line {}: expected 6 fields, got {}", n + 1, fields.len())));
        };
        if !valid_id(id) {
            return Err(bad(format!("line {}: invalid sample id {id:?}", n + 1)));
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| bad(format!("line {}: invalid {what} {s:?}", n + 1)))
        };
        entries.push(ManifestEntry {
            id: id.to_string(),
            height: num(h, "height")? as usize,
            width: num(w, "width")? as usize,
            max_disparity: num(d, "max_disparity")? as usize,
            scene: scene
                .parse()
                .map_err(|_| bad(format!("line {}: unknown scene {scene:?}", n + 1)))?,
            seed: num(seed, "seed")?,
        });
    }
    if text.is_empty() {
        return Err(Error::Decode {
            offset: 0,
            reason: "empty manifest".into(),
        });
    }
    Ok(entries)
}

/// Writes `<root>/<id>/` for one stereogram.
pub fn write_stereogram(root: &Path, s: &Stereogram) -> Result<()> {
    let dir = root.join(&s.sample.id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("left.ppm"), pnm::encode_image(&s.sample.left)?)?;
    fs::write(dir.join("right.ppm"), pnm::encode_image(&s.sample.right)?)?;
    let maps = [
        ("disp_left.pgm16", s.sample.gt_left.as_ref()),
        ("disp_right.pgm16", s.sample.gt_right.as_ref()),
        ("lidar_left.pgm16", Some(&s.sparse_left)),
        ("lidar_right.pgm16", Some(&s.sparse_right)),
    ];
    for (name, map) in maps {
        if let Some(m) = map {
            fs::write(dir.join(name), pnm::encode_disparity(m))?;
        }
    }
    Ok(())
}

/// Which ground-truth files to attach when loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    Dense,
    Sparse,
    None,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Decode { offset, reason } => Error::Decode {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

pub fn load_image(path: &Path) -> Result<crate::Tensor<f32>> {
    with_path(path, pnm::decode_image(&read(path)?))
}

pub fn load_disparity(path: &Path) -> Result<crate::DisparityMap> {
    with_path(path, pnm::decode_disparity(&read(path)?))
}

pub fn load_sample(dir: &Path, gt: GroundTruth) -> Result<StereoSample> {
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let left = load_image(&dir.join("left.ppm"))?;
    let right = load_image(&dir.join("right.ppm"))?;
    if left.shape() != right.shape() {
        return Err(Error::Shape {
            op: "load_sample",
            detail: format!("{id}: left {:?} vs right {:?}", left.shape(), right.shape()),
        });
    }
    let prefix = match gt {
        GroundTruth::Dense => Some("disp"),
        GroundTruth::Sparse => Some("lidar"),
        GroundTruth::None => None,
    };
    let (gt_left, gt_right) = match prefix {
        Some(p) => {
            let l = load_disparity(&dir.join(format!("{p}_left.pgm16")))?;
            let r_path = dir.join(format!("{p}_right.pgm16"));
            let r = if r_path.exists() {
                Some(load_disparity(&r_path)?)
            } else {
                None
            };
            (Some(l), r)
        }
        None => (None, None),
    };
    Ok(StereoSample {
        id,
        left,
        right,
        gt_left,
        gt_right,
    })
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join(MANIFEST);
    let text = String::from_utf8(read(&path)?).map_err(|e| Error::Decode {
        offset: e.utf8_error().valid_up_to(),
        reason: format!("{}: not UTF-8", path.display()),
    })?;
    with_path(&path, parse_manifest(&text))
}

/// Loads every sample listed in `<root>/manifest.csv`, in manifest order.
pub fn load_dataset(root: &Path, gt: GroundTruth) -> Result<Vec<StereoSample>> {
    read_manifest(root)?
        .iter()
        .map(|e| load_sample(&root.join(&e.id), gt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            height: 32,
            width: 64,
            max_disparity: 12,
            scene: Scene::Dots,
            seed: 7,
        }
    }

    #[test]
    fn manifest_round_trip() {
        let entries = vec![entry("a"), entry("b_2")];
        assert_eq!(parse_manifest(&format_manifest(&entries)).unwrap(), entries);
        assert_eq!(parse_manifest(&format_manifest(&[])).unwrap(), vec![]);
    }

    #[test]
    fn manifest_errors() {
        assert!(parse_manifest("").is_err());
        assert!(parse_manifest("id,x\n").is_err());
        let bad_field = format!("{MANIFEST_HEADER}\na,1,2,3,dots\n");
        match parse_manifest(&bad_field) {
            Err(Error::Decode { offset, .. }) => assert_eq!(offset, MANIFEST_HEADER.len() + 1),
            other => panic!("{other:?}"),
        }
        assert!(parse_manifest(&format!("{MANIFEST_HEADER}\n../x,1,2,3,dots,4\n")).is_err());
        assert!(parse_manifest(&format!("{MANIFEST_HEADER}\na,1,2,3,cubes,4\n")).is_err());
    }
}

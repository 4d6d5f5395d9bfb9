//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! "SDNN"  u32 version
//! u32 height  u32 width  u32 max_disparity  u32 channels  u32 features
//! u32 len  variant name bytes
//! u64 step
//! u32 count, then per parameter:
//!     u32 len  name bytes  u32 rank  rank × u32 dims  f32 values
//! u8 has_optimizer; if 1:
//!     u64 t  f64 lr  f64 beta1  f64 beta2  f64 eps
//!     u8 schedule (0 constant, 1 step decay)  u64 total_steps
//!     first moments, then second moments, each as a parameter list
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::net::{Model, ModelConfig};
use crate::tensor::Tensor;
use crate::train::adam::{AdamState, Schedule};

pub const MAGIC: &[u8; 4] = b"SDNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub params: IndexMap<String, Tensor<f32>>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, step: u64, optimizer: Option<AdamState>) -> Self {
        Self {
            config: *model.config(),
            step,
            params: model.params().clone(),
            optimizer,
        }
    }

    /// Rebuilds the model; parameter names and shapes must match the config.
    pub fn into_model(self) -> Result<Model> {
        Model::from_params(self.config, self.params)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} exceeds u32")))?;
    put_u32(out, v);
    Ok(())
}

fn put_tensors(out: &mut Vec<u8>, tensors: &IndexMap<String, Tensor<f32>>) -> Result<()> {
    put_len(out, tensors.len())?;
    for (name, t) in tensors {
        put_len(out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_len(out, t.rank())?;
        for &d in t.shape() {
            put_len(out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, VERSION);
    let cfg = &c.config;
    for v in [cfg.height, cfg.width, cfg.max_disparity, cfg.channels, cfg.features] {
        put_len(&mut out, v)?;
    }
    let name = cfg.variant.name();
    put_len(&mut out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&c.step.to_le_bytes());
    put_tensors(&mut out, &c.params)?;
    match &c.optimizer {
        None => out.push(0),
        Some(s) => {
            out.push(1);
            out.extend_from_slice(&s.t.to_le_bytes());
            for v in [s.lr, s.beta1, s.beta2, s.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let (kind, total) = match s.schedule {
                Schedule::Constant => (0u8, 0u64),
                Schedule::StepDecay { total_steps } => (1, total_steps),
            };
            out.push(kind);
            out.extend_from_slice(&total.to_le_bytes());
            put_tensors(&mut out, &s.m)?;
            put_tensors(&mut out, &s.v)?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn tensors(&mut self, what: &str) -> Result<IndexMap<String, Tensor<f32>>> {
        let count = self.u32(&format!("{what} count"))?;
        let mut out = IndexMap::new();
        for i in 0..count {
            let name = self.string(&format!("{what} name #{i}"))?;
            let ctx = format!("{what} {name}");
            let rank = self.u32(&ctx)? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::Checkpoint(format!("{ctx}: unsupported rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32(&ctx)? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Checkpoint(format!("{ctx}: invalid shape {shape:?}")))?;
            let bytes = numel
                .checked_mul(4)
                .ok_or_else(|| Error::Checkpoint(format!("{ctx}: shape overflow")))?;
            let raw = self.take(bytes, &ctx)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&shape, data)?;
            if out.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate {what} {name}")));
            }
        }
        Ok(out)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32("config")? as usize;
    }
    let variant = r.string("variant")?.parse()?;
    let config = ModelConfig {
        variant,
        height: dims[0],
        width: dims[1],
        max_disparity: dims[2],
        channels: dims[3],
        features: dims[4],
    };
    config.validate()?;
    let step = r.u64("step")?;
    let params = r.tensors("parameter")?;
    let optimizer = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let t = r.u64("optimizer step")?;
            let lr = r.f64("learning rate")?;
            let beta1 = r.f64("beta1")?;
            let beta2 = r.f64("beta2")?;
            let eps = r.f64("eps")?;
            let schedule = match (r.u8("schedule")?, r.u64("schedule steps")?) {
                (0, _) => Schedule::Constant,
                (1, total_steps) => Schedule::StepDecay { total_steps },
                (k, _) => return Err(Error::Checkpoint(format!("unknown schedule kind {k}"))),
            };
            let m = r.tensors("first moment")?;
            let v = r.tensors("second moment")?;
            Some(AdamState {
                m,
                v,
                t,
                lr,
                beta1,
                beta2,
                eps,
                schedule,
            })
        }
        f => return Err(Error::Checkpoint(format!("invalid optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        config,
        step,
        params,
        optimizer,
    })
}

/// Writes atomically via a sibling temporary file.
pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(c)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint into a model built for `config`, listing any
/// missing or unexpected parameter names.
pub fn load_into(path: &Path, config: ModelConfig) -> Result<Model> {
    let c = load_checkpoint(path)?;
    Model::from_params(config, c.params)
}

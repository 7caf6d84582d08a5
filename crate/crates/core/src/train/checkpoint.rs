//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "DMSH"            magic
//! u32               version
//! config block      u32 base_channels, u8 stacks, u64 init_seed,
//!                   u64 global_step, u8 stage, u8 has_adam, u64 adam_t
//! u32               tensor count
//! per tensor        u16 name length, UTF-8 name, u8 ndim, u32 dims × ndim,
//!                   f32 data
//! ```
//!
//! Optimizer moments are stored as ordinary tensors named `adam.m:<param>`
//! and `adam.v:<param>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::net::{NetConfig, Params};
use crate::tensor::{Shape, Tensor};
use crate::train::AdamState;

pub const MAGIC: [u8; 4] = *b"DMSH";
pub const VERSION: u32 = 1;

const ADAM_M: &str = "adam.m:";
const ADAM_V: &str = "adam.v:";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params<f32>,
    pub adam: Option<AdamState<f32>>,
    pub global_step: u64,
    /// Training stage the snapshot was taken in (1 or 2), 0 if untrained.
    pub stage: u8,
}

impl Checkpoint {
    pub fn new(params: Params<f32>) -> Self {
        Checkpoint {
            params,
            adam: None,
            global_step: 0,
            stage: 0,
        }
    }

    pub fn config(&self) -> &NetConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.params.config();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let base = u32::try_from(cfg.base_channels)
            .map_err(|_| CheckpointError::Malformed("base_channels exceeds u32".into()))?;
        out.extend_from_slice(&base.to_le_bytes());
        out.push(cfg.stacks as u8);
        out.extend_from_slice(&cfg.init_seed.to_le_bytes());
        out.extend_from_slice(&self.global_step.to_le_bytes());
        out.push(self.stage);
        out.push(self.adam.is_some() as u8);
        out.extend_from_slice(&self.adam.as_ref().map_or(0, |a| a.t).to_le_bytes());

        let mut tensors: Vec<(String, &Tensor<f32>)> = self.params.iter().map(|(k, v)| (k.clone(), v)).collect();
        if let Some(adam) = &self.adam {
            for (k, (m, v)) in &adam.moments {
                tensors.push((format!("{ADAM_M}{k}"), m));
                tensors.push((format!("{ADAM_V}{k}"), v));
            }
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| CheckpointError::Malformed(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(4);
            for d in t.shape().0 {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic).into());
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: VERSION,
            }
            .into());
        }
        let base_channels = r.u32("config")? as usize;
        let stacks = r.u8("config")? as usize;
        let init_seed = r.u64("config")?;
        let global_step = r.u64("config")?;
        let stage = r.u8("config")?;
        let has_adam = r.u8("config")? != 0;
        let adam_t = r.u64("config")?;
        let config =
            NetConfig::new(base_channels, stacks, init_seed).map_err(|e| CheckpointError::Malformed(e.to_string()))?;

        let count = r.u32("tensor count")?;
        let mut params = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16("tensor name")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u8("tensor dims")? as usize;
            if ndim == 0 || ndim > 4 {
                return Err(CheckpointError::Malformed(format!("{name}: unsupported ndim {ndim}")).into());
            }
            let mut dims = [1usize; 4];
            for i in 0..ndim {
                dims[4 - ndim + i] = r.u32("tensor dims")? as usize;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])
                .map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
            let raw = r.take(shape.numel() * 4, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::from_vec(shape, data)?;
            let slot = if let Some(p) = name.strip_prefix(ADAM_M) {
                m.insert(p.to_string(), t)
            } else if let Some(p) = name.strip_prefix(ADAM_V) {
                v.insert(p.to_string(), t)
            } else {
                params.insert(name.clone(), t)
            };
            if slot.is_some() {
                return Err(CheckpointError::Malformed(format!("duplicate tensor {name}")).into());
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos).into());
        }

        let params = Params::from_tensors(config, params).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let adam = if has_adam {
            let mut moments = BTreeMap::new();
            for (name, p) in params.iter() {
                match (m.remove(name), v.remove(name)) {
                    (Some(mt), Some(vt)) if mt.shape() == p.shape() && vt.shape() == p.shape() => {
                        moments.insert(name.clone(), (mt, vt));
                    }
                    _ => {
                        return Err(CheckpointError::Malformed(format!(
                            "optimizer state for {name} missing or misshapen"
                        ))
                        .into())
                    }
                }
            }
            if !(m.is_empty() && v.is_empty()) {
                return Err(CheckpointError::Malformed("optimizer state for unknown parameters".into()).into());
            }
            Some(AdamState { t: adam_t, moments })
        } else {
            if !(m.is_empty() && v.is_empty()) {
                return Err(CheckpointError::Malformed("optimizer tensors without the optimizer flag".into()).into());
            }
            None
        };
        Ok(Checkpoint {
            params,
            adam,
            global_step,
            stage,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

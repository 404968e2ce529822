//! Binary checkpoint format.
//!
//! ```text
//! "SNNF" | u32 version | u64 epoch | u64 seed
//! u32 count | count × (u32 name_len, name, u32 rank, rank × u64 dim, numel × f64)
//! u8 has_optimizer | [u64 steps, f64 lr, buffers(first), buffers(second)]
//! 32-byte config hash
//! ```
//!
//! All integers and floats are little-endian. `buffers` is `u32 count` followed
//! by `count × (u64 len, len × f64)`.

use std::fs;
use std::path::Path;

use super::{Network, Optimizer, OptimizerConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SNNF";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub steps: usize,
    pub lr: f64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub seed: u64,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<OptimizerState>,
    pub config_hash: [u8; 32],
}

impl Checkpoint {
    pub fn capture(net: &Network, opt: Option<&Optimizer>, epoch: usize, seed: u64, config_hash: [u8; 32]) -> Self {
        Self {
            epoch,
            seed,
            params: net.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            optimizer: opt.map(|o| OptimizerState {
                steps: o.steps,
                lr: o.lr,
                first: o.first.clone(),
                second: o.second.clone(),
            }),
            config_hash,
        }
    }

    /// Rebuilds an optimiser with this checkpoint's state, checking buffer sizes against `net`.
    pub fn restore_optimizer(&self, config: OptimizerConfig, net: &Network) -> Result<Optimizer> {
        let mut opt = Optimizer::new(config, net.params())?;
        if let Some(state) = &self.optimizer {
            let fits = |bufs: &[Vec<f64>], want: &[Vec<f64>]| {
                bufs.len() == want.len() && bufs.iter().zip(want).all(|(a, b)| a.len() == b.len())
            };
            if !fits(&state.first, &opt.first) || !fits(&state.second, &opt.second) {
                return Err(Error::Checkpoint("optimizer state does not match the network".into()));
            }
            opt.steps = state.steps;
            opt.lr = state.lr;
            opt.first = state.first.clone();
            opt.second = state.second.clone();
        }
        Ok(opt)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f64s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&(s.steps as u64).to_le_bytes());
                out.extend_from_slice(&s.lr.to_le_bytes());
                for bufs in [&s.first, &s.second] {
                    out.extend_from_slice(&(bufs.len() as u32).to_le_bytes());
                    for b in bufs {
                        out.extend_from_slice(&(b.len() as u64).to_le_bytes());
                        put_f64s(&mut out, b);
                    }
                }
            }
        }
        out.extend_from_slice(&self.config_hash);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let epoch = r.u64()? as usize;
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel.ok_or_else(|| Error::Checkpoint(format!("shape of {name} overflows")))?;
            let data = r.f64s(numel)?;
            params.push((name, Tensor::new(shape, data)?));
        }
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let steps = r.u64()? as usize;
                let lr = r.f64()?;
                let mut bufs = [Vec::new(), Vec::new()];
                for slot in &mut bufs {
                    let n = r.u32()? as usize;
                    for _ in 0..n {
                        let len = r.u64()? as usize;
                        slot.push(r.f64s(len)?);
                    }
                }
                let [first, second] = bufs;
                Some(OptimizerState {
                    steps,
                    lr,
                    first,
                    second,
                })
            }
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(r.take(32)?);
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            epoch,
            seed,
            params,
            optimizer,
            config_hash,
        })
    }
}

fn put_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("buffer length overflows".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

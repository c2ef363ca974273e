//! Checkpoint container.
//!
//! Little-endian layout: magic `SCCK`, version `u32`, header length `u32`,
//! JSON header (`config`, `training_meta`), the parameter table, then an
//! optimizer flag byte optionally followed by the Adam step `u64` and the
//! first/second moment tables. A table is a `u32` entry count followed by
//! entries of `name_len u32 | name | ndim u32 | dims u32… | f32 values`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ParamSet, Tensor, Upsampler};
use crate::scanio::Channel;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SCCK";
const VERSION: u32 = 1;

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: u64,
    pub step: u64,
    pub channel: Option<Channel>,
    pub seed: u64,
    pub loss_history: Vec<EpochRecord>,
    /// Ids of the checkpoints this one was fine-tuned from, oldest first.
    pub provenance: Vec<String>,
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: ParamSet<f32>,
    pub second_moment: ParamSet<f32>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Upsampler<f32>,
    pub meta: TrainingMeta,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    training_meta: TrainingMeta,
}

impl PartialEq for Checkpoint {
    fn eq(&self, other: &Self) -> bool {
        self.model.config() == other.model.config()
            && self.model.params() == other.model.params()
            && self.meta == other.meta
            && self.optimizer == other.optimizer
    }
}

fn write_table(out: &mut Vec<u8>, params: &ParamSet<f32>) {
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corruption(format!("checkpoint truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn table(&mut self) -> Result<ParamSet<f32>> {
        let count = self.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = self.u32()? as usize;
            let shape = (0..ndim).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Corruption("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor { name, shape, data });
        }
        Ok(ParamSet::from_tensors(tensors))
    }
}

impl Checkpoint {
    pub fn new(model: Upsampler<f32>) -> Self {
        Checkpoint { model, meta: TrainingMeta::default(), optimizer: None }
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    /// Content hash of the architecture and parameters (16 hex digits).
    pub fn id(&self) -> String {
        let mut bytes = serde_json::to_vec(self.model.config()).unwrap();
        write_table(&mut bytes, self.model.params());
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.model.params().all_finite() {
            return Err(Error::Validation("refusing to save non-finite parameters".into()));
        }
        let header = serde_json::to_vec(&Header {
            config: self.model.config().clone(),
            training_meta: self.meta.clone(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        write_table(&mut out, self.model.params());
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                write_table(&mut out, &opt.first_moment);
                write_table(&mut out, &opt.second_moment);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing SCCK magic".into()));
        }
        let mut r = Reader { bytes, at: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Corruption(format!("checkpoint header: {e}")))?;
        let params = r.table()?;
        let model = Upsampler::from_params(&header.config, params)?;
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let first_moment = r.table()?;
                let second_moment = r.table()?;
                Some(OptimizerState { step, first_moment, second_moment })
            }
            other => return Err(Error::Corruption(format!("bad optimizer flag {other}"))),
        };
        if r.at != bytes.len() {
            return Err(Error::Corruption(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(Checkpoint { model, meta: header.training_meta, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

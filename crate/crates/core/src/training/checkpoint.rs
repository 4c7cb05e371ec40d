//! Checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "AKCK" | version u32 | group count u32
//! per group:  name (u16 len + utf8) | frozen u8 | tensor count u32
//!   per tensor: name (u16 len + utf8) | rank u8 | dims u32 * rank
//! tensor data: f32 * numel for every tensor, in table order
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ParamGroup, Params, Tensor};
use super::TrainingConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AKCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_name(buf: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::validation("name_too_long", format!("name {name:?} is too long")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    Ok(())
}

pub fn encode_checkpoint(params: &Params) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(64 + 4 * params.numel());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.groups.len() as u32).to_le_bytes());
    for g in &params.groups {
        put_name(&mut buf, &g.name)?;
        buf.push(g.frozen as u8);
        buf.extend_from_slice(&(g.tensors.len() as u32).to_le_bytes());
        for t in &g.tensors {
            put_name(&mut buf, &t.name)?;
            buf.push(t.shape.len() as u8);
            for &d in &t.shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
    }
    for v in params.groups.iter().flat_map(|g| &g.tensors).flat_map(|t| &t.data) {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::State(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::State("checkpoint name is not UTF-8".into()))
    }
}

/// Parameters widened back to `f64`.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Params> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::State("not a checkpoint file".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Migration {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut groups = Vec::new();
    for _ in 0..cur.u32()? {
        let name = cur.name()?;
        let frozen = cur.u8()? != 0;
        let mut tensors = Vec::new();
        for _ in 0..cur.u32()? {
            let tname = cur.name()?;
            let rank = cur.u8()? as usize;
            let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            tensors.push(Tensor::zeros(tname, &shape));
        }
        groups.push(ParamGroup { name, tensors, frozen });
    }
    for t in groups.iter_mut().flat_map(|g| &mut g.tensors) {
        for v in &mut t.data {
            *v = f32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as f64;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::State(format!("{} trailing bytes in checkpoint", bytes.len() - cur.pos)));
    }
    Ok(Params { groups })
}

pub fn write_checkpoint(path: &Path, params: &Params) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Params> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Values rounded to checkpoint precision, for comparisons against a reloaded file.
pub fn round_to_f32(params: &Params) -> Params {
    let mut out = params.clone();
    for v in out.groups.iter_mut().flat_map(|g| &mut g.tensors).flat_map(|t| &mut t.data) {
        *v = *v as f32 as f64;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub micro_steps: u64,
    pub optimizer_steps: u64,
    pub final_lr: f64,
    /// Mean loss over the last optimizer step's micro batches; absent for an empty run.
    pub final_loss: Option<f64>,
    pub train_iou: Option<f64>,
}

/// Sidecar text manifest next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub checkpoint: String,
    pub frozen: Vec<String>,
    pub trainable: Vec<String>,
    pub config: TrainingConfig,
    pub metrics: FinalMetrics,
}

impl CheckpointManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::State(format!("manifest: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))
    }
}

pub const LOG_HEADER: [&str; 4] = ["micro_step", "optimizer_step", "lr", "loss"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub micro_step: u64,
    pub optimizer_step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub fn write_training_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::State(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::State(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_training_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::State(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path.display().to_string(), i + 2, e.to_string())))
        .collect()
}

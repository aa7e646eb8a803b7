//! Binary parameter checkpoints.
//!
//! ```text
//! bytes 0..8    magic "PGNCKPT\0"
//! bytes 8..16   header length L, u64 little-endian
//! bytes 16..16+L  JSON header {version, config, tensors: [{name, rows, cols, offset}], meta}
//! rest          every tensor as row-major f64 little-endian, offsets in values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, Slot};
use super::ModelConfig;
use crate::adcore::Tensor;
use crate::error::{Error, Result};
use crate::tracegen::write_atomic;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PGNCKPT\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Free-form provenance (training config, seeds, scores).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (slot, t) in Slot::ALL.iter().zip(ckpt.params.tensors()) {
        entries.push(TensorEntry {
            name: slot.name().to_string(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
        offset += t.data().len();
    }
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION,
        config: ckpt.config.clone(),
        tensors: entries,
        meta: ckpt.meta.clone(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in ckpt.params.tensors() {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn malformed(msg: &str) -> Error {
    Error::Malformed(format!("checkpoint: {msg}"))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(len))
        .ok_or_else(|| malformed("truncated header"))?;
    let raw: serde_json::Value = serde_json::from_slice(body)?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let header: Header = serde_json::from_value(raw)?;
    header.config.validate()?;
    let data = &bytes[16 + len..];
    if data.len() % 8 != 0 {
        return Err(malformed("data block is not a whole number of f64 values"));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if header.tensors.len() != Slot::ALL.len() {
        return Err(malformed("wrong tensor count"));
    }
    let mut tensors = Vec::with_capacity(Slot::ALL.len());
    for (slot, e) in Slot::ALL.iter().zip(&header.tensors) {
        if e.name != slot.name() {
            return Err(malformed(&format!(
                "expected tensor {}, found {}",
                slot.name(),
                e.name
            )));
        }
        let end = e.offset + e.rows * e.cols;
        let slice = values
            .get(e.offset..end)
            .ok_or_else(|| malformed(&format!("tensor {} out of bounds", e.name)))?;
        tensors.push(Tensor::from_vec(e.rows, e.cols, slice.to_vec())?);
    }
    let params = ModelParams::from_tensors(&header.config, tensors)?;
    Ok(Checkpoint {
        config: header.config,
        params,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &write_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}

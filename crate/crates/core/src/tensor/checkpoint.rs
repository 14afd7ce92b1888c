//! `PGT1` checkpoint files.
//!
//! Layout: the 4-byte magic `PGT1`, a little-endian `u32` manifest length, a
//! UTF-8 JSON manifest listing `{name, shape, dtype, offset}` per tensor, then a
//! flat little-endian float payload. Offsets are byte offsets into the payload.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{numel, Result, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGT1";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    F32,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<CheckpointEntry>,
}

fn ckpt_err(e: impl std::fmt::Display) -> TensorError {
    TensorError::Checkpoint(e.to_string())
}

/// Writes named tensors. `F32` storage rounds each value.
pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[(String, Tensor)], dtype: DType) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        entries.push(CheckpointEntry { name: name.clone(), shape: t.shape().to_vec(), dtype, offset });
        offset += (t.len() * dtype.width()) as u64;
    }
    let manifest = serde_json::to_vec(&Manifest { version: MANIFEST_VERSION, tensors: entries }).map_err(ckpt_err)?;
    let mut buf = Vec::with_capacity(8 + manifest.len() + offset as usize);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for (_, t) in tensors {
        for &v in t.data() {
            match dtype {
                DType::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                DType::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    w.write_all(&buf).map_err(ckpt_err)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(ckpt_err)?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ckpt_err("missing PGT1 magic header"));
    }
    let mlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload_start = 8 + mlen;
    if bytes.len() < payload_start {
        return Err(ckpt_err("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..payload_start]).map_err(ckpt_err)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ckpt_err(format!("unsupported manifest version {}", manifest.version)));
    }
    let payload = &bytes[payload_start..];
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let n = numel(&e.shape);
        let w = e.dtype.width();
        let start = e.offset as usize;
        let end = start + n * w;
        if end > payload.len() {
            return Err(ckpt_err(format!("tensor {} runs past the payload", e.name)));
        }
        let data = payload[start..end]
            .chunks_exact(w)
            .map(|c| match e.dtype {
                DType::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
                DType::F32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
            })
            .collect();
        out.push((e.name, Tensor::new(&e.shape, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    #[test]
    fn f64_round_trip_is_exact() {
        let mut rng = seeded_rng(5);
        let ts = vec![
            ("a".to_string(), Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng)),
            ("b".to_string(), Tensor::scalar(std::f64::consts::PI)),
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ts, DType::F64).unwrap();
        assert_eq!(&buf[..4], b"PGT1");
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), ts);
    }

    #[test]
    fn f32_storage_rounds() {
        let ts = vec![("x".to_string(), Tensor::from_slice(&[0.1, 1.0 / 3.0]))];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ts, DType::F32).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back[0].1.data(), &[0.1f32 as f64, (1.0f32 / 3.0) as f64]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(read_checkpoint(&b"NOPE\0\0\0\0"[..]), Err(TensorError::Checkpoint(_))));
    }
}

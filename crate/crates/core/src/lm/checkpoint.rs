//! Self-describing checkpoint files.
//!
//! Layout: the magic line `IMBLM1\n`, one line of JSON (`config` plus a tensor
//! manifest of `name`, `shape`, `offset` in bytes from the start of the
//! payload), then every tensor as little-endian `f32` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LMConfig, LMParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"IMBLM1\n";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: LMConfig,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(params: &LMParams<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_bytes(params: &LMParams<f32>) -> Vec<u8> {
    let mut offset = 0;
    let tensors = LMParams::<f32>::manifest(&params.config)
        .into_iter()
        .map(|(name, shape)| {
            let entry = TensorEntry {
                name,
                offset,
                shape: shape.clone(),
            };
            offset += shape.iter().product::<usize>() * 4;
            entry
        })
        .collect();
    let header = Header {
        config: params.config,
        tensors,
    };
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend(serde_json::to_vec(&header).expect("header serializes"));
    out.push(b'\n');
    for t in params.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn load_checkpoint(path: &Path) -> Result<(LMParams<f32>, LMConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Loads a checkpoint and checks that it has the `expected` architecture.
pub fn load_checkpoint_expecting(path: &Path, expected: &LMConfig) -> Result<LMParams<f32>> {
    let (params, config) = load_checkpoint(path)?;
    if &config != expected {
        return Err(Error::CheckpointShape(format!(
            "checkpoint holds {config:?}, expected {expected:?}"
        )));
    }
    Ok(params)
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<(LMParams<f32>, LMConfig)> {
    let Some(rest) = bytes.strip_prefix(CHECKPOINT_MAGIC) else {
        return Err(Error::CheckpointVersion("missing IMBLM1 magic".into()));
    };
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CheckpointTruncated("header line is not terminated".into()))?;
    let header: Header = serde_json::from_slice(&rest[..newline])
        .map_err(|e| Error::CheckpointTruncated(format!("unreadable header: {e}")))?;
    let payload = &rest[newline + 1..];
    let config = header.config;
    config
        .validate()
        .map_err(|e| Error::CheckpointShape(format!("invalid config in header: {e}")))?;

    let expected = LMParams::<f32>::manifest(&config);
    if expected.len() != header.tensors.len() {
        return Err(Error::CheckpointShape(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let mut params = LMParams::<f32>::zeros(config);
    for ((entry, (name, shape)), dst) in header.tensors.iter().zip(&expected).zip(params.tensors_mut()) {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::CheckpointShape(format!(
                "tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let n_bytes = dst.len() * 4;
        let src = payload
            .get(entry.offset..entry.offset + n_bytes)
            .ok_or_else(|| Error::CheckpointTruncated(format!("payload ends inside tensor {name:?}")))?;
        for (x, chunk) in dst.iter_mut().zip(src.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    Ok((params, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::init_params;

    fn cfg(d_ff: usize) -> LMConfig {
        LMConfig {
            vocab_size: 9,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_k: 4,
            d_ff,
            max_len: 10,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.imblm");
        let p = init_params::<f32>(cfg(16), 7).unwrap();
        save_checkpoint(&p, &path).unwrap();
        let (q, c) = load_checkpoint(&path).unwrap();
        assert_eq!(c, cfg(16));
        let bits = |p: &LMParams<f32>| -> Vec<u32> { p.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect() };
        assert_eq!(bits(&p), bits(&q));
        assert!(load_checkpoint_expecting(&path, &cfg(16)).is_ok());
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = to_bytes(&init_params::<f32>(cfg(16), 0).unwrap());
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::CheckpointVersion(_))));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let bytes = to_bytes(&init_params::<f32>(cfg(16), 0).unwrap());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CheckpointTruncated(_))));
        assert!(matches!(from_bytes(&bytes[..20]), Err(Error::CheckpointTruncated(_))));
    }

    #[test]
    fn wrong_architecture_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.imblm");
        save_checkpoint(&init_params::<f32>(cfg(16), 0).unwrap(), &path).unwrap();
        assert!(matches!(
            load_checkpoint_expecting(&path, &cfg(8)),
            Err(Error::CheckpointShape(_))
        ));
    }
}

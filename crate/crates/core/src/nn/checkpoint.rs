//! Checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! b"CKPT" | u32 version | u32 config_len | config JSON
//! u32 tensor_count
//! per tensor: u32 name_len | name (UTF-8) | u8 trainable | u32 ndim | u32 dims[ndim] | f32 data[prod(dims)]
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, ModelParams, NnError, ParamTensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(config: &ModelConfig, params: &ModelParams<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.total_len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.trainable as u8);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), NnError> {
    let bytes = encode_checkpoint(&model.config, &model.params);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Corrupt(format!("unexpected end of checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint, returning the stored config and tensors (not yet
/// validated against any config).
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(ModelConfig, Vec<ParamTensor<T>>), NnError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(NnError::BadMagic);
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let cfg_len = c.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(c.take(cfg_len)?).map_err(|e| NnError::Corrupt(format!("config: {e}")))?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| NnError::Corrupt("tensor name is not UTF-8".into()))?;
        let trainable = c.take(1)?[0] != 0;
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or_else(|| NnError::Corrupt("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::of_f32(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        tensors.push(ParamTensor { name, shape, data, trainable });
    }
    if c.pos != bytes.len() {
        return Err(NnError::Corrupt(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok((config, tensors))
}

/// Loads a checkpoint using the config stored inside it.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, NnError> {
    let bytes = read(path)?;
    let (config, tensors) = decode_checkpoint(&bytes)?;
    config.validate()?;
    let params = ModelParams::from_tensors(&config, tensors)?;
    Ok(Model { config, params })
}

/// Loads a checkpoint and checks every tensor against `config`.
pub fn load_checkpoint_for<T: Scalar>(path: &Path, config: &ModelConfig) -> Result<ModelParams<T>, NnError> {
    let bytes = read(path)?;
    let (_, tensors) = decode_checkpoint(&bytes)?;
    ModelParams::from_tensors(config, tensors)
}

/// Short content hash identifying a checkpoint file.
pub fn checkpoint_id(path: &Path) -> Result<String, NnError> {
    let bytes = read(path)?;
    Ok(Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn read(path: &Path) -> Result<Vec<u8>, NnError> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => NnError::CheckpointMissing(path.to_path_buf()),
        _ => NnError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut cfg = ModelConfig::default();
        cfg.encoder.freeze_boundary = 1;
        let model = Model::<f32>::new(cfg.clone(), 17).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back, model);
        assert!(!back.params.get("encoder.stem.kernel").unwrap().trainable);
        let p = load_checkpoint_for::<f32>(&path, &cfg).unwrap();
        assert_eq!(p, model.params);
    }

    #[test]
    fn config_mismatch_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&Model::<f32>::new(ModelConfig::default(), 1).unwrap(), &path).unwrap();
        let mut other = ModelConfig::default();
        other.lstm_units = 16;
        assert!(matches!(load_checkpoint_for::<f32>(&path, &other), Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn missing_tensor_is_named() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f32>::init(&cfg, 2).unwrap();
        let kept: Vec<_> = params.tensors().iter().filter(|t| t.name != "head.dense1.bias").cloned().collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let full = encode_checkpoint(&cfg, &params);
        // Re-encode with one tensor removed by splicing a fresh header.
        let cfg_len = u32::from_le_bytes(full[8..12].try_into().unwrap()) as usize;
        bytes.extend_from_slice(&full[8..12 + cfg_len]);
        bytes.extend_from_slice(&(kept.len() as u32).to_le_bytes());
        for t in &kept {
            bytes.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            bytes.extend_from_slice(t.name.as_bytes());
            bytes.push(1);
            bytes.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                bytes.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("head.dense1.bias"), "{err}");
    }

    #[test]
    fn bad_magic_and_truncation() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f32>::init(&cfg, 2).unwrap();
        let mut bytes = encode_checkpoint(&cfg, &params);
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint::<f32>(&bytes), Err(NnError::BadMagic)));
    }
}

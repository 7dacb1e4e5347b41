//! Model checkpoint file: magic `GCLRMDL1`, u32 format version, u32 count of
//! architecture dims followed by the dims, then every parameter as a
//! little-endian f32 in declaration order.

use std::fs;
use std::path::Path;

use super::model::{Architecture, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GCLRMDL1";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let desc = params.arch().descriptor();
    let mut out = Vec::with_capacity(16 + 4 * desc.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    for d in desc {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in params.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams<f32>> {
    let truncated = |expected: usize| Error::TruncatedBlob {
        path: path.to_path_buf(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let u32_at = |o: usize| -> Result<u32> {
        bytes
            .get(o..o + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| truncated(o + 4))
    };
    let version = u32_at(8)?;
    if version != VERSION {
        return Err(Error::parse(path, format!("unsupported checkpoint version {version}")));
    }
    let n = u32_at(12)? as usize;
    let desc = (0..n).map(|i| u32_at(16 + 4 * i)).collect::<Result<Vec<_>>>()?;
    let arch = Architecture::from_descriptor(&desc)?;
    let start = 16 + 4 * n;
    let count = arch.param_count();
    let expected = start + 4 * count;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::parse(path, "trailing bytes after parameters"));
    }
    let data = bytes[start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParams::from_data(arch, data)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

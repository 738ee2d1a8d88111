//! Model checkpoints: `"FMCK"`, version `u32`, shape `4 × u32` (d, M, L, C),
//! count `u64`, then `count` little-endian `f64` values in [`Params`] layout.

use std::fs;
use std::path::Path;

use super::params::{ModelShape, Params};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FMCK";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 16 + 8;

pub fn encode_params<T: Scalar>(params: &Params<T>) -> Vec<u8> {
    let s = params.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [s.input_dim, s.embed_dim, s.attn_dim, s.num_classes] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &x in params.as_slice() {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_params<T: Scalar>(bytes: &[u8]) -> Result<Params<T>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Malformed("not a model checkpoint".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let shape = ModelShape {
        input_dim: u32_at(8) as usize,
        embed_dim: u32_at(12) as usize,
        attn_dim: u32_at(16) as usize,
        num_classes: u32_at(20) as usize,
    };
    shape.validate()?;
    let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    if count != shape.num_params() {
        return Err(Error::LengthMismatch(format!(
            "header declares {count} values, shape implies {}",
            shape.num_params()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(Error::LengthMismatch(format!("expected {} payload bytes, found {}", 8 * count, body.len())));
    }
    let data = body.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect();
    Params::from_vec(shape, data)
}

pub fn save_params<T: Scalar>(params: &Params<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Scalar>(path: impl AsRef<Path>) -> Result<Params<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes)
}

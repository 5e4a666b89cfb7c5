//! Flat little-endian parameter checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic        4 bytes  "SSCK"
//! version      u32
//! dtype        u8       1 = f32, 2 = f64
//! seed         u64
//! depth, n_heads, head_dim, vocab_size, context_length, mlp_ratio   6 x u32
//! n_tensors    u32
//! per tensor, in parameter order:
//!   name_len u16, name (utf-8), ndim u8, dims ndim x u32, values
//! ```

use std::io::{Read, Write};

use super::{ModelConfig, ModelError, Params, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn err(e: impl std::fmt::Display) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &Params<T>, seed: u64, mut out: W) -> Result<(), ModelError> {
    let c = &params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(T::DTYPE);
    buf.extend_from_slice(&seed.to_le_bytes());
    for x in [c.depth, c.n_heads, c.head_dim, c.vocab_size, c.context_length, c.mlp_ratio] {
        buf.extend_from_slice(&(x as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.push(t.shape.len() as u8);
        for &s in &t.shape {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &x in &t.data {
            x.write_le(&mut buf);
        }
    }
    out.write_all(&buf).map_err(err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| err("truncated checkpoint"))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Reads a checkpoint, returning the parameters and the seed they came from.
pub fn read_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<(Params<T>, u64), ModelError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(err)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(err("bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let dtype = cur.take(1)?[0];
    if dtype != T::DTYPE {
        return Err(err(format!("dtype tag {dtype} does not match the requested precision")));
    }
    let seed = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = cur.u32()? as usize;
    }
    let config = ModelConfig {
        depth: dims[0],
        n_heads: dims[1],
        head_dim: dims[2],
        vocab_size: dims[3],
        context_length: dims[4],
        mlp_ratio: dims[5],
    };
    config.validate()?;
    let mut params = Params::<T>::zeros(&config);
    let n = cur.u32()? as usize;
    if n != params.tensors.len() {
        return Err(err(format!("expected {} tensors, found {n}", params.tensors.len())));
    }
    for t in params.tensors.iter_mut() {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(cur.take(len)?).map_err(err)?;
        if name != t.name {
            return Err(err(format!("expected tensor {}, found {name}", t.name)));
        }
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        if shape != t.shape {
            return Err(err(format!("shape mismatch for {name}")));
        }
        for x in t.data.iter_mut() {
            *x = T::read_le(cur.take(T::BYTES)?);
        }
    }
    if cur.pos != bytes.len() {
        return Err(err("trailing bytes after the last tensor"));
    }
    Ok((params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn roundtrip_and_corruption() {
        let cfg = ModelConfig {
            depth: 2,
            n_heads: 1,
            head_dim: 8,
            vocab_size: 12,
            context_length: 20,
            mlp_ratio: 4,
        };
        let p = init_params::<f32>(&cfg, 42).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&p, 42, &mut bytes).unwrap();
        let (q, seed) = read_checkpoint::<f32, _>(bytes.as_slice()).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(p, q);

        assert!(read_checkpoint::<f64, _>(bytes.as_slice()).is_err());
        assert!(read_checkpoint::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32, _>(bad.as_slice()).is_err());
    }
}

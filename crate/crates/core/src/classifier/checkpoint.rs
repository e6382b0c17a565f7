//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic, version u32, d_e u32, d_d u32, seed u64,
//! calibration-trainable u8, block count u32, then per block a u16 name
//! length, the name, a u64 element count and the f64 values.

use std::path::Path;

use super::{ClassifierParams, BLOCK_NAMES};
use crate::error::{Error, Result};
use crate::ranking::Calibration;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IRISCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(params: &ClassifierParams, seed: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.d_e as u32).to_le_bytes());
    out.extend_from_slice(&(params.d_d as u32).to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.push(params.calibration.trainable as u8);
    out.extend_from_slice(&(BLOCK_NAMES.len() as u32).to_le_bytes());
    for (name, block) in BLOCK_NAMES.iter().zip(params.blocks()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Returns the parameters and the seed they were trained with.
pub fn decode(buf: &[u8]) -> Result<(ClassifierParams, u64)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a parameter checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let d_e = u32::from_le_bytes(r.array()?) as usize;
    let d_d = u32::from_le_bytes(r.array()?) as usize;
    let seed = u64::from_le_bytes(r.array()?);
    let trainable = r.array::<1>()?[0] != 0;
    let n_blocks = u32::from_le_bytes(r.array()?) as usize;
    if n_blocks != BLOCK_NAMES.len() {
        return Err(Error::Checkpoint(format!("expected {} blocks, found {n_blocks}", BLOCK_NAMES.len())));
    }
    let mut params = ClassifierParams::zeros(d_e, d_d, Calibration::identity(trainable));
    for (expected, block) in BLOCK_NAMES.iter().zip(params.blocks_mut()) {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let name = r.take(len)?;
        if name != expected.as_bytes() {
            return Err(Error::Checkpoint(format!("expected block {expected}, found {}", String::from_utf8_lossy(name))));
        }
        let count = u64::from_le_bytes(r.array()?) as usize;
        if count != block.len() {
            return Err(Error::Checkpoint(format!("block {expected} has {count} values, expected {}", block.len())));
        }
        for v in block.iter_mut() {
            *v = f64::from_le_bytes(r.array()?);
            if !v.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite value in block {expected}")));
            }
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    Ok((params, seed))
}

pub fn write_checkpoint(path: &Path, params: &ClassifierParams, seed: u64) -> Result<()> {
    crate::artifact::write_atomic(path, &encode(params, seed))
}

pub fn read_checkpoint(path: &Path) -> Result<(ClassifierParams, u64)> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&buf)
}

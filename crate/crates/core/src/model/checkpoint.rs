//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "NAFX" | u32 version | u32 header_len | header (key=value lines)
//! u32 array_count
//! per array, sorted by name:
//!   u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data[prod(dims)]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: &[u8; 4] = b"NAFX";
pub const VERSION: u32 = 1;

/// Serializes to bytes. Identical inputs give identical bytes.
pub fn checkpoint_bytes(cfg: &ModelConfig, p: &ModelParams<f32>) -> Result<Vec<u8>> {
    p.check_shapes(cfg)?;
    let header = cfg.to_header();
    let groups = p.groups();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for g in groups {
        out.extend_from_slice(&(g.name.len() as u16).to_le_bytes());
        out.extend_from_slice(g.name.as_bytes());
        out.push(g.dims.len() as u8);
        for &d in &g.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in g.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses bytes produced by [`checkpoint_bytes`].
pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<(ModelConfig, ModelParams<f32>)> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let header_len = c.u32()? as usize;
    let header = std::str::from_utf8(c.take(header_len)?)
        .map_err(|_| CheckpointError::MalformedHeader("header is not UTF-8".into()))?;
    let cfg = ModelConfig::from_header(header)?;
    let mut p = ModelParams::<f32>::zeros(&cfg)?;
    let expected: Vec<(&'static str, Vec<usize>)> =
        p.groups().into_iter().map(|g| (g.name, g.dims)).collect();

    let count = c.u32()? as usize;
    if count != expected.len() {
        return Err(CheckpointError::ShapeMismatch {
            name: "<arrays>".into(),
            msg: format!("{count} arrays, config implies {}", expected.len()),
        }
        .into());
    }
    let mut slots = p.groups_mut();
    for ((name, dims), (_, slot)) in expected.iter().zip(slots.iter_mut()) {
        let name_len = c.u16()? as usize;
        let got_name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| CheckpointError::MalformedHeader("array name is not UTF-8".into()))?;
        if got_name != *name {
            return Err(CheckpointError::ShapeMismatch {
                name: got_name.into(),
                msg: format!("expected array {name:?} at this position"),
            }
            .into());
        }
        let ndim = c.u8()? as usize;
        let got_dims = (0..ndim)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if got_dims != *dims {
            return Err(CheckpointError::ShapeMismatch {
                name: got_name.into(),
                msg: format!("dims {got_dims:?}, config implies {dims:?}"),
            }
            .into());
        }
        let raw = c.take(slot.len() * 4)?;
        for (v, b) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    drop(slots);
    if c.pos != buf.len() {
        return Err(CheckpointError::MalformedHeader(format!(
            "{} trailing bytes",
            buf.len() - c.pos
        ))
        .into());
    }
    Ok((cfg, p))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, p: &ModelParams<f32>) -> Result<()> {
    let bytes = checkpoint_bytes(cfg, p)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams<f32>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&buf)
}

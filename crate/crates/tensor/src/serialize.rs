//! Binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"CCMN"              magic
//! u32                  version (= 1)
//! u32                  tensor count
//! per tensor, in store order:
//!   u16                name length in bytes
//!   [u8]               UTF-8 name
//!   u8                 rank
//!   u32 × rank         dimensions
//!   f32 × Π dims       values, little-endian IEEE-754
//! ```
//!
//! Values are stored as `f32`, so a load rounds `f64` parameters; a
//! save → load → save cycle reproduces the bytes exactly.

use std::io::Write;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::error::{Result, TensorError};
use crate::store::ParameterStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CCMN";
pub const VERSION: u32 = 1;

pub fn serialize_params(store: &ParameterStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_params(store, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn write_params<W: Write>(store: &ParameterStore, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(store.len() as u32)?;
    for (name, p) in store.iter() {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| TensorError::State(format!("parameter name too long: {name}")))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(bytes)?;
        let shape = p.value.shape();
        w.write_u8(shape.len() as u8)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in p.value.data() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(TensorError::Format {
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a parameter file. Returns the store and the number of bytes
/// consumed, so callers can embed the stream inside a larger file.
pub fn deserialize_params_prefix(buf: &[u8]) -> Result<(ParameterStore, usize)> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(TensorError::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(TensorError::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let count = r.u32("tensor count")?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| TensorError::Format {
            offset: start + 2,
            msg: "parameter name is not UTF-8".into(),
        })?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| TensorError::Format {
            offset: start,
            msg: e.to_string(),
        })?;
        store.insert(name, t).map_err(|e| TensorError::Format {
            offset: start,
            msg: e.to_string(),
        })?;
    }
    Ok((store, r.pos))
}

/// Parses a complete parameter file; trailing bytes are a format error.
pub fn deserialize_params(buf: &[u8]) -> Result<ParameterStore> {
    let (store, used) = deserialize_params_prefix(buf)?;
    if used != buf.len() {
        return Err(TensorError::Format {
            offset: used,
            msg: format!("{} trailing bytes", buf.len() - used),
        });
    }
    Ok(store)
}

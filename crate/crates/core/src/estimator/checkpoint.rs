//! Model checkpoints.
//!
//! ```text
//! b"CCMK"          magic
//! u32              version (= 1), little-endian
//! u32              length of the JSON header in bytes, little-endian
//! [u8]             UTF-8 JSON of the ModelConfig
//! ...              parameter stream (b"CCMN" format) to end of file
//! ```

use std::path::Path;

use ccc_tensor::serialize::{deserialize_params, serialize_params};

use crate::error::{Error, Result};

use super::model::{CcmModel, ModelConfig};

pub const MAGIC: &[u8; 4] = b"CCMK";
pub const VERSION: u32 = 1;

pub fn write_checkpoint(model: &CcmModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&model.config)
        .map_err(|e| Error::Config(format!("cannot encode model configuration: {e}")))?;
    let mut out = Vec::with_capacity(12 + header.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&serialize_params(&model.params));
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8], origin: &str) -> Result<CcmModel> {
    let fmt = |offset: usize, msg: String| Error::Format { path: origin.to_string(), offset, msg };
    if bytes.len() < 12 {
        return Err(fmt(bytes.len(), "truncated checkpoint header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(0, format!("bad magic {:?}, expected {MAGIC:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fmt(4, format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let end = 12usize
        .checked_add(len)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| fmt(8, format!("header length {len} runs past end of file")))?;
    let config: ModelConfig = serde_json::from_slice(&bytes[12..end])
        .map_err(|e| fmt(12, format!("bad model configuration: {e}")))?;
    config.validate()?;
    let params = deserialize_params(&bytes[end..]).map_err(|e| match e {
        ccc_tensor::TensorError::Format { offset, msg } => fmt(end + offset, msg),
        other => Error::Tensor(other),
    })?;
    CcmModel::from_parts(config, params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &CcmModel) -> Result<()> {
    let bytes = write_checkpoint(model)?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CcmModel> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    read_checkpoint(&bytes, &path.as_ref().display().to_string())
}

//! Binary checkpoint format, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `ESCK` |
//! | 4     | format version (`1`) |
//! | 4     | length `n` of the config JSON |
//! | n     | [`ModelConfig`] as JSON |
//! | 1     | element width in bytes (4 or 8) |
//! | 8     | parameter count |
//! | rest  | parameters in [`crate::ParamIndex`] order |

use std::path::Path;

use crate::config::ModelConfig;
use crate::elem::Elem;
use crate::error::ModelError;
use crate::model::Model;

const MAGIC: &[u8; 4] = b"ESCK";
const VERSION: u32 = 1;

pub fn to_bytes<E: Elem>(model: &Model<E>) -> Vec<u8> {
    let json = serde_json::to_vec(&model.cfg).expect("config serializes");
    let mut out = Vec::with_capacity(21 + json.len() + model.params.len() * E::BYTES as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.push(E::BYTES);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for &v in &model.params {
        v.write_le(&mut out);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn bad(msg: &str) -> ModelError {
    ModelError::Checkpoint(msg.to_string())
}

/// Parses a checkpoint. Values stored at a different width are converted.
pub fn from_bytes<E: Elem>(buf: &[u8]) -> Result<Model<E>, ModelError> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(n)?).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
    let width = r.take(1)?[0];
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let body = r.take(count.checked_mul(width as usize).ok_or_else(|| bad("size overflow"))?)?;
    if r.at != buf.len() {
        return Err(bad("trailing bytes"));
    }
    let params: Vec<E> = match width {
        4 => body.chunks_exact(4).map(|c| E::lit(f32::read_le(c) as f64)).collect(),
        8 => body.chunks_exact(8).map(|c| E::lit(f64::read_le(c))).collect(),
        w => return Err(ModelError::Checkpoint(format!("unsupported element width {w}"))),
    };
    Model::from_params(cfg, params)
}

pub fn save<E: Elem>(model: &Model<E>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load<E: Elem>(path: &Path) -> Result<Model<E>, ModelError> {
    from_bytes(&std::fs::read(path)?)
}

//! Model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "XDCK"
//! version    u32      currently 1
//! config     u32 length + UTF-8 JSON of the ModelConfig
//! blocks     u32 count, then per parameter, in model order:
//!              u16 name length + UTF-8 name
//!              u8 rank + rank × u32 dims
//!              numel × f64 values
//! ```
//!
//! Values are stored bit-for-bit, so a save/load round trip is exact.

use std::fs;
use std::path::Path;

use xdomain_core::model::{ModelConfig, Param, SiameseModel};
use xdomain_core::Tensor;

use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"XDCK";
pub const VERSION: u32 = 1;

pub fn encode(model: &SiameseModel) -> Vec<u8> {
    let config = serde_json::to_vec(model.config()).expect("ModelConfig always serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn str(&mut self, n: usize) -> Result<&'a str, String> {
        std::str::from_utf8(self.take(n)?).map_err(|e| e.to_string())
    }
}

fn decode_inner(bytes: &[u8]) -> Result<SiameseModel, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_str(r.str(len)?).map_err(|e| format!("config: {e}"))?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = r.str(len)?.to_string();
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| format!("{name}: shape overflows"))?;
        let raw = r.take(numel.checked_mul(8).ok_or("block too large")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| format!("{name}: {e}"))?;
        params.push(Param { name, value });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    SiameseModel::from_params(config, params).map_err(|e| e.to_string())
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<SiameseModel, FormatError> {
    decode_inner(bytes).map_err(|msg| FormatError::invalid(path, msg))
}

pub fn save(path: &Path, model: &SiameseModel) -> Result<(), FormatError> {
    fs::write(path, encode(model)).map_err(FormatError::io(path))
}

pub fn load(path: &Path) -> Result<SiameseModel, FormatError> {
    let bytes = fs::read(path).map_err(FormatError::io(path))?;
    decode(&bytes, path)
}

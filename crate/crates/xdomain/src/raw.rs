//! Raw Hounsfield-unit arrays.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `XDHU`                           |
//! | 4      | 1    | format version, currently 1            |
//! | 5      | 1    | dtype: 1 = i16, 2 = i32, 3 = f32, 4 = f64 |
//! | 6      | 2    | reserved, zero                         |
//! | 8      | 4    | rows (u32)                             |
//! | 12     | 4    | cols (u32)                             |
//! | 16     | …    | rows·cols values, row-major            |

use std::fs;
use std::path::Path;

use xdomain_core::data::{preprocess_ct, HuImage};
use xdomain_core::Tensor;

use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"XDHU";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    I16,
    I32,
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::I16 => 1,
            Dtype::I32 => 2,
            Dtype::F32 => 3,
            Dtype::F64 => 4,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => Dtype::I16,
            2 => Dtype::I32,
            3 => Dtype::F32,
            4 => Dtype::F64,
            _ => return None,
        })
    }

    fn width(self) -> usize {
        match self {
            Dtype::I16 => 2,
            Dtype::I32 | Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<HuImage, FormatError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(FormatError::invalid(path, "not a raw HU file (bad magic)"));
    }
    if bytes[4] != VERSION {
        return Err(FormatError::invalid(path, format!("unsupported raw HU version {}", bytes[4])));
    }
    let dtype = Dtype::from_code(bytes[5])
        .ok_or_else(|| FormatError::invalid(path, format!("unknown dtype code {}", bytes[5])))?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| FormatError::invalid(path, "dimensions overflow"))?;
    if body.len() != expected {
        return Err(FormatError::invalid(
            path,
            format!("{rows}x{cols} {dtype:?} needs {expected} body bytes, found {}", body.len()),
        ));
    }
    let w = dtype.width();
    let data = body
        .chunks_exact(w)
        .map(|c| match dtype {
            Dtype::I16 => i16::from_le_bytes(c.try_into().unwrap()) as f64,
            Dtype::I32 => i32::from_le_bytes(c.try_into().unwrap()) as f64,
            Dtype::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            Dtype::F64 => f64::from_le_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok(HuImage { rows, cols, data })
}

/// Encodes `img` with the given sample type. Integer types round to nearest
/// and fail on values they cannot hold.
pub fn encode(img: &HuImage, dtype: Dtype) -> Result<Vec<u8>, String> {
    if img.data.len() != img.rows * img.cols {
        return Err(format!(
            "{}x{} image carries {} values",
            img.rows,
            img.cols,
            img.data.len()
        ));
    }
    let rows = u32::try_from(img.rows).map_err(|_| "too many rows")?;
    let cols = u32::try_from(img.cols).map_err(|_| "too many columns")?;
    let mut out = Vec::with_capacity(HEADER_LEN + img.data.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, dtype.code(), 0, 0]);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in &img.data {
        match dtype {
            Dtype::I16 => {
                let r = v.round();
                if !(r >= i16::MIN as f64 && r <= i16::MAX as f64) {
                    return Err(format!("{v} does not fit in i16"));
                }
                out.extend_from_slice(&(r as i16).to_le_bytes());
            }
            Dtype::I32 => {
                let r = v.round();
                if !(r >= i32::MIN as f64 && r <= i32::MAX as f64) {
                    return Err(format!("{v} does not fit in i32"));
                }
                out.extend_from_slice(&(r as i32).to_le_bytes());
            }
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<HuImage, FormatError> {
    let bytes = fs::read(path).map_err(FormatError::io(path))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, img: &HuImage, dtype: Dtype) -> Result<(), FormatError> {
    let bytes = encode(img, dtype).map_err(|msg| FormatError::invalid(path, msg))?;
    fs::write(path, bytes).map_err(FormatError::io(path))
}

/// Reads a raw HU file and runs it through the CT preprocessing (window,
/// rescale to `[0, 1]`, resize to `size`×`size`).
pub fn load_ct(path: &Path, window: (f64, f64), size: usize) -> Result<Tensor, FormatError> {
    let img = read(path)?;
    Ok(preprocess_ct(&img, window, size)?)
}

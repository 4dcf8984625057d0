use std::io::{Read, Write};
use std::path::Path;

use crate::error::{open_error, Error, Result};
use crate::raster::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;

/// Components above this magnitude mark unknown flow.
pub const FLO_UNKNOWN_THRESHOLD: f32 = 1e9;
const FLO_UNKNOWN: f32 = 1e10;

/// Serializes to the Middlebury layout: magic, width, height, then
/// interleaved `(u, v)` pairs, all little-endian. Invalid pixels are written
/// as unknown flow.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut buf = Vec::with_capacity(12 + 8 * w * h);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for i in 0..w * h {
        let (u, v) = if flow.valid()[i] {
            (flow.u()[i], flow.v()[i])
        } else {
            (FLO_UNKNOWN, FLO_UNKNOWN)
        };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_flo(flow))?;
    Ok(())
}

/// Parses `.flo` bytes; `path` is only used in error messages.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 4 || f32::from_le_bytes(bytes[..4].try_into().unwrap()) != FLO_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            detail: "expected 202021.25".into(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 12,
            found: bytes.len(),
        });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16 {
        return Err(Error::Format(format!("implausible .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let needed = 12 + 8 * w * h;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: needed,
            found: bytes.len(),
        });
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for pair in bytes[12..needed].chunks_exact(8) {
        let a = f32::from_le_bytes(pair[..4].try_into().unwrap());
        let b = f32::from_le_bytes(pair[4..].try_into().unwrap());
        let known =
            a.is_finite() && b.is_finite() && a.abs() <= FLO_UNKNOWN_THRESHOLD && b.abs() <= FLO_UNKNOWN_THRESHOLD;
        u.push(if known { a } else { 0.0 });
        v.push(if known { b } else { 0.0 });
        valid.push(known);
    }
    FlowField::from_parts(w, h, u, v, valid)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| open_error(path, e))?
        .read_to_end(&mut bytes)?;
    decode_flo(&bytes, path)
}

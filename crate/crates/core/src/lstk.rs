//! The LSTK binary container.
//!
//! Little-endian header followed by a row-major `f32` payload:
//!
//! ```text
//! offset  field
//!      0  magic       b"LSTK"
//!      4  version     u32   1 = layer stack, 2 = posterior matrix
//!      8  layers      u32   L
//!     12  frames      u32   T
//!     16  dim         u32   D
//!     20  frame_rate  f32   frames per second
//!     24  vocab       u32   version 2 only; must equal D, and L must be 1
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LSTK";
pub const VERSION_FEATURES: u32 = 1;
pub const VERSION_POSTERIORS: u32 = 2;

const BASE_HEADER: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FiniteCheck {
    /// Every value must be finite.
    Strict,
    /// `-inf` is allowed (log-probabilities of impossible tokens).
    AllowNegInfinity,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawLstk {
    pub version: u32,
    pub layers: usize,
    pub frames: usize,
    pub dim: usize,
    pub frame_rate: f32,
    pub data: Vec<f32>,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub(crate) fn decode(bytes: &[u8], check: FiniteCheck) -> Result<RawLstk> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < BASE_HEADER {
        return Err(Error::DimensionMismatch(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    let version = read_u32(bytes, 4);
    let header_len = match version {
        VERSION_FEATURES => BASE_HEADER,
        VERSION_POSTERIORS => BASE_HEADER + 4,
        v => return Err(Error::UnsupportedVersion(v)),
    };
    if bytes.len() < header_len {
        return Err(Error::DimensionMismatch("truncated header".into()));
    }
    let layers = read_u32(bytes, 8) as usize;
    let frames = read_u32(bytes, 12) as usize;
    let dim = read_u32(bytes, 16) as usize;
    let frame_rate = f32::from_le_bytes(bytes[20..24].try_into().expect("4-byte slice"));
    if layers == 0 || frames == 0 || dim == 0 {
        return Err(Error::DimensionMismatch(format!(
            "zero dimension in header: L={layers} T={frames} D={dim}"
        )));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::Validation(format!("frame_rate must be > 0, got {frame_rate}")));
    }
    if version == VERSION_POSTERIORS {
        let vocab = read_u32(bytes, 24) as usize;
        if layers != 1 || vocab != dim {
            return Err(Error::DimensionMismatch(format!(
                "posterior header needs L=1 and vocab=D, got L={layers} vocab={vocab} D={dim}"
            )));
        }
    }

    let count = layers
        .checked_mul(frames)
        .and_then(|n| n.checked_mul(dim))
        .ok_or_else(|| Error::DimensionMismatch("header dimensions overflow".into()))?;
    let payload = &bytes[header_len..];
    if payload.len() != count * 4 {
        return Err(Error::DimensionMismatch(format!(
            "header declares {layers}x{frames}x{dim} = {count} floats, payload holds {} bytes",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        let ok = match check {
            FiniteCheck::Strict => v.is_finite(),
            FiniteCheck::AllowNegInfinity => v.is_finite() || v == f32::NEG_INFINITY,
        };
        if !ok {
            return Err(Error::NonFiniteValue(i));
        }
        data.push(v);
    }
    Ok(RawLstk {
        version,
        layers,
        frames,
        dim,
        frame_rate,
        data,
    })
}

pub(crate) fn encode(raw: &RawLstk) -> Vec<u8> {
    let header_len = if raw.version == VERSION_POSTERIORS {
        BASE_HEADER + 4
    } else {
        BASE_HEADER
    };
    let mut out = Vec::with_capacity(header_len + raw.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&raw.version.to_le_bytes());
    for n in [raw.layers, raw.frames, raw.dim] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&raw.frame_rate.to_le_bytes());
    if raw.version == VERSION_POSTERIORS {
        out.extend_from_slice(&(raw.dim as u32).to_le_bytes());
    }
    for v in &raw.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn read_file(path: &Path, check: FiniteCheck) -> Result<RawLstk> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, check)
}

pub(crate) fn write_file(path: &Path, raw: &RawLstk) -> Result<()> {
    let bytes = encode(raw);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

//! DMAP: little-endian container for a four-plane density set.
//!
//! ```text
//! "DMAP" | version u32 = 1 | planes u32 = 4 | width u32 | height u32 | downsample f64
//! planes * width * height f32, row-major, plane order tiny, small, middle, large
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::density::{DensityError, DensityMap, DensityMapSet};

pub const MAGIC: &[u8; 4] = b"DMAP";
pub const VERSION: u32 = 1;
pub const PLANES: u32 = 4;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum DmapError {
    #[error("not a DMAP file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported DMAP version {0}")]
    Version(u32),
    #[error("DMAP declares {0} planes, expected 4")]
    PlaneCount(u32),
    #[error("DMAP dimensions {width}x{height} overflow the addressable size")]
    DimensionOverflow { width: u32, height: u32 },
    #[error("DMAP payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("DMAP has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid DMAP content: {0}")]
    Content(#[from] DensityError),
    #[error("DMAP i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode(set: &DensityMapSet) -> Vec<u8> {
    let (w, h) = (set.width(), set.height());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * w * h * PLANES as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&PLANES.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&set.downsample().to_le_bytes());
    for map in set.maps() {
        for &v in map.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<DensityMapSet, DmapError> {
    if bytes.len() < 4 {
        return Err(DmapError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(DmapError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DmapError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(DmapError::Version(version));
    }
    let planes = u32_at(bytes, 8);
    if planes != PLANES {
        return Err(DmapError::PlaneCount(planes));
    }
    let (width, height) = (u32_at(bytes, 12), u32_at(bytes, 16));
    let downsample = f64::from_le_bytes(bytes[20..28].try_into().unwrap());

    let cells = (width as usize)
        .checked_mul(height as usize)
        .filter(|c| c.checked_mul(4 * PLANES as usize).is_some())
        .ok_or(DmapError::DimensionOverflow { width, height })?;
    let expected = HEADER_LEN + cells * 4 * PLANES as usize;
    if bytes.len() < expected {
        return Err(DmapError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DmapError::TrailingBytes(bytes.len() - expected));
    }

    let mut chunks = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut maps = Vec::with_capacity(4);
    for _ in 0..PLANES {
        let values: Vec<f64> = chunks.by_ref().take(cells).collect();
        maps.push(DensityMap::from_values(
            width as usize,
            height as usize,
            downsample,
            values,
        )?);
    }
    let maps: [DensityMap; 4] = maps.try_into().expect("four planes");
    Ok(DensityMapSet::new(maps)?)
}

pub fn write_dmap(set: &DensityMapSet, path: impl AsRef<Path>) -> Result<(), DmapError> {
    fs::write(path, encode(set))?;
    Ok(())
}

pub fn read_dmap(path: impl AsRef<Path>) -> Result<DensityMapSet, DmapError> {
    decode(&fs::read(path)?)
}

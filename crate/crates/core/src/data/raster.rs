//! NKRF rasters: 64-bit grids with an optional packed bit mask.
//!
//! Layout (little-endian): magic `NKRF`, version `u32`, height `u32`, width
//! `u32`, flags `u32` (bit 0: mask present), `height * width` `f64` values in
//! row-major order, then, if flagged, the mask packed row-major into
//! `ceil(height * width / 8)` bytes, least significant bit first. Unused bits
//! of the last mask byte must be zero.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, ParamMap};
use crate::io::Cursor;

pub const MAGIC: &[u8; 4] = b"NKRF";
pub const VERSION: u32 = 1;
const FLAG_MASK: u32 = 1;
/// Upper bound on `height * width` accepted when decoding.
pub const MAX_PIXELS: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl Raster {
    pub fn from_envelope(image: &EnvelopeImage) -> Self {
        Self { height: image.height(), width: image.width(), values: image.data().to_vec(), mask: None }
    }

    /// Values plus the validity mask.
    pub fn from_map(map: &ParamMap) -> Self {
        Self {
            height: map.height(),
            width: map.width(),
            values: map.values().to_vec(),
            mask: Some(map.valid().to_vec()),
        }
    }

    pub fn into_envelope(self) -> Result<EnvelopeImage> {
        EnvelopeImage::new(self.height, self.width, self.values)
    }

    /// A missing mask means every pixel is valid.
    pub fn into_map(self) -> Result<ParamMap> {
        let valid = self.mask.unwrap_or_else(|| vec![true; self.values.len()]);
        ParamMap::new(self.height, self.width, self.values, valid)
    }
}

pub fn encode_raster(r: &Raster) -> Result<Vec<u8>> {
    let n = r.height * r.width;
    if r.height == 0 || r.width == 0 || r.values.len() != n || r.mask.as_ref().is_some_and(|m| m.len() != n) {
        return Err(Error::Config("raster dimensions do not match its data".into()));
    }
    let (h, w) = (u32::try_from(r.height), u32::try_from(r.width));
    let (Ok(h), Ok(w)) = (h, w) else {
        return Err(Error::Config("raster dimensions exceed u32".into()));
    };
    let mut out = Vec::with_capacity(20 + 8 * n + n / 8 + 1);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    let flags = if r.mask.is_some() { FLAG_MASK } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for v in &r.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(mask) = &r.mask {
        for chunk in mask.chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
            out.push(byte);
        }
    }
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let mut cur = Cursor::new(bytes, "NKRF");
    cur.expect_magic(MAGIC)?;
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("NKRF version {version} is not supported (expected {VERSION})")));
    }
    let height = cur.u32()? as usize;
    let width = cur.u32()? as usize;
    if height == 0 || width == 0 {
        return Err(Error::Format(format!("NKRF dimensions {height}x{width} are empty")));
    }
    let n = height
        .checked_mul(width)
        .filter(|n| *n <= MAX_PIXELS)
        .ok_or_else(|| Error::Format(format!("NKRF dimensions {height}x{width} are too large")))?;
    let flags = cur.u32()?;
    if flags & !FLAG_MASK != 0 {
        return Err(Error::Format(format!("NKRF flags {flags:#x} have unknown bits")));
    }
    let values = cur.f64_vec(n)?;
    let mask = if flags & FLAG_MASK != 0 {
        let packed = cur.take(n.div_ceil(8))?;
        let tail_bits = n % 8;
        if tail_bits != 0 && packed[packed.len() - 1] >> tail_bits != 0 {
            return Err(Error::Format("NKRF mask padding bits are set".into()));
        }
        Some((0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect())
    } else {
        None
    };
    cur.finish()?;
    Ok(Raster { height, width, values, mask })
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    let bytes = encode_raster(raster)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    decode_raster(&std::fs::read(path)?)
}

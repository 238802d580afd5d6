//! Netpbm graymaps, plain (P2) and raw (P5), up to 16 bits per sample.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl GrayImage {
    /// Quantises intensities in `[0, 1]` to `0..=maxval`.
    pub fn from_intensities(height: usize, width: usize, intensities: &[f64], maxval: u16) -> Result<Self> {
        if height == 0 || width == 0 || intensities.len() != height * width || maxval == 0 {
            return Err(Error::Config("bad graymap dimensions or maxval".into()));
        }
        let pixels = intensities
            .iter()
            .map(|&v| {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("intensity {v} outside [0, 1]")));
                }
                Ok((v * maxval as f64).round() as u16)
            })
            .collect::<Result<_>>()?;
        Ok(Self { height, width, maxval, pixels })
    }

    /// Pixel values divided by `maxval`.
    pub fn intensities(&self) -> Vec<f64> {
        let scale = self.maxval as f64;
        self.pixels.iter().map(|&p| p as f64 / scale).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    Plain,
    Raw,
}

pub fn encode_pgm(img: &GrayImage, encoding: PgmEncoding) -> Vec<u8> {
    let magic = match encoding {
        PgmEncoding::Plain => "P2",
        PgmEncoding::Raw => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    match encoding {
        PgmEncoding::Raw => {
            for &p in &img.pixels {
                if img.maxval > 255 {
                    out.extend_from_slice(&p.to_be_bytes());
                } else {
                    out.push(p as u8);
                }
            }
        }
        PgmEncoding::Plain => {
            for row in img.pixels.chunks(img.width) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

struct Header {
    width: usize,
    height: usize,
    maxval: u16,
}

// Whitespace- and comment-aware token reader over the header.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.next().ok_or_else(|| Error::Format(format!("PGM: missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("PGM: bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

fn header(tokens: &mut Tokens<'_>) -> Result<Header> {
    let width = tokens.number("width")?;
    let height = tokens.number("height")?;
    let maxval = tokens.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("PGM: empty dimensions {width}x{height}")));
    }
    if width.checked_mul(height).map_or(true, |n| n > super::raster::MAX_PIXELS) {
        return Err(Error::Format("PGM: dimensions too large".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM: maxval {maxval} outside 1..=65535")));
    }
    Ok(Header { width, height, maxval: maxval as u16 })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::Format("PGM: file too short".into()));
    }
    let raw = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::Format(format!(
                "PGM: unsupported magic {:?} (only P2/P5 graymaps)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut tokens = Tokens { bytes, pos: 2 };
    if tokens.pos < bytes.len() && !bytes[tokens.pos].is_ascii_whitespace() && bytes[tokens.pos] != b'#' {
        return Err(Error::Format("PGM: magic must be followed by whitespace".into()));
    }
    let h = header(&mut tokens)?;
    let n = h.width * h.height;
    let pixels: Vec<u16> = if raw {
        // Exactly one whitespace byte separates maxval from the raster.
        match bytes.get(tokens.pos) {
            Some(b) if b.is_ascii_whitespace() => tokens.pos += 1,
            _ => return Err(Error::Format("PGM: missing separator before raster".into())),
        }
        let wide = h.maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let body = &bytes[tokens.pos..];
        if body.len() < need {
            return Err(Error::Format(format!("PGM: raster truncated ({} of {need} bytes)", body.len())));
        }
        if body.len() > need {
            return Err(Error::Format(format!("PGM: {} trailing bytes", body.len() - need)));
        }
        if wide {
            body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            body.iter().map(|&b| b as u16).collect()
        }
    } else {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            px.push(tokens.number("sample").map_err(|e| match e {
                Error::Format(m) if m.contains("missing") => Error::Format("PGM: raster truncated".into()),
                other => other,
            })? as u64);
        }
        tokens.skip_space();
        if tokens.pos != bytes.len() {
            return Err(Error::Format("PGM: trailing data after raster".into()));
        }
        px.into_iter()
            .map(|v| u16::try_from(v).map_err(|_| Error::Format(format!("PGM: sample {v} too large"))))
            .collect::<Result<_>>()?
    };
    if let Some(p) = pixels.iter().find(|&&p| p > h.maxval) {
        return Err(Error::Format(format!("PGM: sample {p} exceeds maxval {}", h.maxval)));
    }
    Ok(GrayImage { height: h.height, width: h.width, maxval: h.maxval, pixels })
}

pub fn write_pgm(path: &Path, img: &GrayImage, encoding: PgmEncoding) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pgm(img, encoding))?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

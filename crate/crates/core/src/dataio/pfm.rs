//! Portable FloatMap images.
//!
//! Header: `PF` (color) or `Pf` (gray), whitespace, width and height,
//! whitespace, a scale whose sign gives the byte order (negative means
//! little-endian), one whitespace byte, then 32-bit floats with rows stored
//! bottom to top. Images written here always use a `-1.0` scale.

use std::path::Path;

use crate::error::{Error, Result};
use crate::histogram::RawImage;

/// Decoded PFM contents, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f64]) -> Result<Vec<u8>> {
    if channels != 1 && channels != 3 {
        return Err(Error::Shape(format!("PFM holds 1 or 3 channels, not {channels}")));
    }
    if data.len() != width * height * channels || width == 0 || height == 0 {
        return Err(Error::Shape(format!(
            "{width}×{height}×{channels} PFM needs {} values, got {}",
            width * height * channels,
            data.len()
        )));
    }
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format { path: self.origin.to_string(), offset: self.pos, msg: msg.into() }
    }

    fn skip_space(&mut self) {
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("truncated header: missing {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos]).map_err(|_| self.err(format!("{what} is not ASCII")))
    }
}

pub fn decode_pfm(buf: &[u8], origin: &str) -> Result<PfmImage> {
    let mut c = Cursor { buf, pos: 0, origin };
    let channels = match buf.get(..2) {
        Some(b"PF") => 3,
        Some(b"Pf") => 1,
        _ => return Err(c.err("not a PFM file: expected PF or Pf")),
    };
    c.pos = 2;
    if !buf.get(2).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(c.err("expected whitespace after the PFM tag"));
    }
    let dim = |c: &mut Cursor, what: &str| -> Result<usize> {
        let at = c.pos;
        let t = c.token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Format {
                path: origin.to_string(),
                offset: at,
                msg: format!("invalid {what} {t:?}"),
            }),
        }
    };
    let width = dim(&mut c, "width")?;
    let height = dim(&mut c, "height")?;
    let at = c.pos;
    let scale: f64 = c.token("scale")?.parse().map_err(|_| Error::Format {
        path: origin.to_string(),
        offset: at,
        msg: "scale is not a number".into(),
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format { path: origin.to_string(), offset: at, msg: "scale must be non-zero".into() });
    }
    if !buf.get(c.pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(c.err("expected a single whitespace byte before the raster"));
    }
    c.pos += 1;
    let little = scale < 0.0;
    let n = width * height * channels;
    let raster = &buf[c.pos..];
    if raster.len() < n * 4 {
        return Err(Error::Format {
            path: origin.to_string(),
            offset: buf.len(),
            msg: format!("truncated raster: need {} bytes, have {}", n * 4, raster.len()),
        });
    }
    if raster.len() > n * 4 {
        return Err(Error::Format {
            path: origin.to_string(),
            offset: c.pos + n * 4,
            msg: format!("{} trailing bytes after raster", raster.len() - n * 4),
        });
    }
    let row = width * channels;
    let mut data = vec![0.0f32; n];
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmImage { width, height, channels, data })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a color PFM. Values are taken as normalized to a saturation level of 1.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let img = decode_pfm(&read_bytes(path)?, &origin)?;
    if img.channels != 3 {
        return Err(Error::Format { path: origin, offset: 0, msg: "expected a color (PF) image".into() });
    }
    RawImage::new(img.width, img.height, img.data.iter().map(|v| *v as f64).collect(), 1.0)
        .map_err(|e| Error::Format { path: origin, offset: 0, msg: e.to_string() })
}

pub fn write_pfm(path: impl AsRef<Path>, image: &RawImage) -> Result<()> {
    let bytes = encode_pfm(image.width(), image.height(), 3, image.pixels())?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Single-channel map, row-major from the top.
pub fn write_pfm_gray(path: impl AsRef<Path>, width: usize, height: usize, data: &[f64]) -> Result<()> {
    let bytes = encode_pfm(width, height, 1, data)?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn read_pfm_gray(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let img = decode_pfm(&read_bytes(path)?, &origin)?;
    if img.channels != 1 {
        return Err(Error::Format { path: origin, offset: 0, msg: "expected a grayscale (Pf) image".into() });
    }
    Ok((img.width, img.height, img.data.iter().map(|v| *v as f64).collect()))
}

//! Grayscale little-endian PFM depth files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Encodes a single-channel raster as a little-endian grayscale PFM.
/// Samples are stored as `f32`, bottom row first.
pub fn encode_pfm(raster: &Raster) -> Result<Vec<u8>> {
    if raster.channels() != 1 {
        return Err(Error::Invalid(format!(
            "PFM depth needs 1 channel, raster has {}",
            raster.channels()
        )));
    }
    if let Some(bad) = raster.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("depth raster contains {bad}")));
    }
    let (w, h) = (raster.width(), raster.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(raster.get(x, y, 0) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        None
    } else {
        std::str::from_utf8(&bytes[start..*pos]).ok()
    }
}

pub fn decode_pfm(bytes: &[u8], label: &str) -> Result<Raster> {
    let bad = |msg: String| Error::parse(label, 0, msg);
    let mut pos = 0;
    match next_token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err(Error::Unsupported(format!("{label}: color PFM"))),
        other => return Err(bad(format!("bad PFM magic {other:?}"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        next_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| bad(format!("bad PFM {what}")))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let scale: f64 = next_token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad PFM scale".into()))?;
    if scale >= 0.0 {
        return Err(Error::Unsupported(format!(
            "{label}: big-endian PFM (scale {scale})"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() != w * h * 4 {
        return Err(bad(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            w * h * 4
        )));
    }
    let mut raster = Raster::new(w, h, 1);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(bad(format!("non-finite sample {v} at index {i}")));
        }
        let (x, row) = (i % w, i / w);
        raster.set(x, h - 1 - row, 0, v as f64);
    }
    Ok(raster)
}

pub fn read_depth_pfm(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, &path.display().to_string())
}

pub fn write_depth_pfm(path: &Path, raster: &Raster) -> Result<()> {
    let bytes = encode_pfm(raster)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

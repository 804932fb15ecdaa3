use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

const MAGIC: [u8; 4] = *b"CTGT";

/// Per-view inpainted images and depth targets produced by the coarse
/// stage, stored at `f32` precision so that they survive a round trip
/// through disk unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseTargets {
    pub ids: Vec<u32>,
    pub images: Vec<Raster>,
    pub depths: Vec<Raster>,
}

fn to_f32_precision(r: &Raster) -> Raster {
    r.map(|v| v as f32 as f64)
}

impl CoarseTargets {
    pub fn new(ids: Vec<u32>, images: Vec<Raster>, depths: Vec<Raster>) -> Result<Self> {
        if ids.len() != images.len() || ids.len() != depths.len() {
            return Err(Error::Dimension("one image and one depth per view".into()));
        }
        Ok(Self {
            ids,
            images: images.iter().map(to_f32_precision).collect(),
            depths: depths.iter().map(to_f32_precision).collect(),
        })
    }

    pub fn index(&self, id: u32) -> Result<usize> {
        self.ids
            .iter()
            .position(|&v| v == id)
            .ok_or_else(|| Error::View {
                view: id,
                message: "no coarse target for this view".into(),
            })
    }

    /// `CTGT`, view count, then per view: id, width, height, RGB and depth
    /// as little-endian `u32`/`f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        for ((id, img), depth) in self.ids.iter().zip(&self.images).zip(&self.depths) {
            for v in [*id, img.width() as u32, img.height() as u32] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in img.data().iter().chain(depth.data()) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], label: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            file: label.to_string(),
            line: 0,
            message: m.to_string(),
        };
        if bytes.len() < 8 || bytes[..4] != MAGIC {
            return Err(bad("not a coarse target file"));
        }
        let words: Vec<[u8; 4]> = bytes[4..]
            .chunks(4)
            .map(|c| c.try_into().map_err(|_| bad("truncated")))
            .collect::<Result<_>>()?;
        let mut it = words.into_iter();
        let mut next = || it.next().ok_or_else(|| bad("truncated"));
        let n = u32::from_le_bytes(next()?) as usize;
        let (mut ids, mut images, mut depths) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let id = u32::from_le_bytes(next()?);
            let w = u32::from_le_bytes(next()?) as usize;
            let h = u32::from_le_bytes(next()?) as usize;
            let mut read = |count: usize| -> Result<Vec<f64>> {
                (0..count).map(|_| next().map(|b| f32::from_le_bytes(b) as f64)).collect()
            };
            let img = Raster::from_vec(w, h, 3, read(w * h * 3)?)?;
            let depth = Raster::from_vec(w, h, 1, read(w * h)?)?;
            ids.push(id);
            images.push(img);
            depths.push(depth);
        }
        if next().is_ok() {
            return Err(bad("trailing data"));
        }
        Ok(Self { ids, images, depths })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

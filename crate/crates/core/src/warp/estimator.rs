use crate::error::{Error, Result};
use crate::raster::Raster;

/// Monocular depth from a single RGB image. Implementations return a
/// one-channel raster of the image's size, finite and positive.
pub trait DepthEstimator {
    fn estimate(&self, image: &Raster) -> Result<Raster>;
}

/// Returns a depth raster supplied up front, ignoring the image.
#[derive(Debug, Clone)]
pub struct RenderedPassthrough {
    pub depth: Raster,
}

impl DepthEstimator for RenderedPassthrough {
    fn estimate(&self, image: &Raster) -> Result<Raster> {
        if !image.same_size(&self.depth) || self.depth.channels() != 1 {
            return Err(Error::Dimension(format!(
                "passthrough depth is {}x{}x{}, image is {}x{}",
                self.depth.width(),
                self.depth.height(),
                self.depth.channels(),
                image.width(),
                image.height()
            )));
        }
        Ok(self.depth.clone())
    }
}

/// Depth `base + slope·row`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPlane {
    pub base: f64,
    pub slope: f64,
}

impl Default for ConstantPlane {
    fn default() -> Self {
        Self {
            base: 1.0,
            slope: 0.01,
        }
    }
}

impl DepthEstimator for ConstantPlane {
    fn estimate(&self, image: &Raster) -> Result<Raster> {
        let out = Raster::from_fn(image.width(), image.height(), 1, |_, y, _| {
            self.base + self.slope * y as f64
        });
        if out.data().iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::Invalid(format!(
                "plane depth {} + {}·row is not positive over {} rows",
                self.base,
                self.slope,
                image.height()
            )));
        }
        Ok(out)
    }
}

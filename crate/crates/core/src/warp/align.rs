use crate::error::{Error, Result};
use crate::raster::Raster;

/// Affine map `s·mono + b` onto rendered depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    pub scale: f64,
    pub shift: f64,
}

impl AlignmentParams {
    pub fn apply(&self, mono: &Raster) -> Raster {
        mono.map(|m| self.scale * m + self.shift)
    }
}

/// Least-squares scale and shift taking `mono` to `rendered` over pixels
/// where `valid` is nonzero. Solves the 2×2 normal equations in centered
/// form.
pub fn align_depth_least_squares(
    mono: &Raster,
    rendered: &Raster,
    valid: &Raster,
) -> Result<AlignmentParams> {
    mono.ensure_same_shape(rendered, "depth alignment")?;
    mono.ensure_same_shape(valid, "depth alignment mask")?;
    let pairs: Vec<(f64, f64)> = mono
        .data()
        .iter()
        .zip(rendered.data())
        .zip(valid.data())
        .filter(|(_, &v)| v > 0.0)
        .map(|((&m, &r), _)| (m, r))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Numeric(format!(
            "depth alignment needs 2 valid pixels, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mean_m = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_r = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut var, mut cov, mut sq) = (0.0, 0.0, 0.0);
    for &(m, r) in &pairs {
        var += (m - mean_m) * (m - mean_m);
        cov += (m - mean_m) * (r - mean_r);
        sq += m * m;
    }
    if var <= 1e-12 * sq.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(
            "monocular depth is constant over valid pixels".into(),
        ));
    }
    let scale = cov / var;
    Ok(AlignmentParams {
        scale,
        shift: mean_r - scale * mean_m,
    })
}

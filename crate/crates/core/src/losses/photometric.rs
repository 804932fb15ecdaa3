use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::{align_depth_least_squares, AlignmentParams};

use super::ssim::{ssim, ssim_with_grad};

/// Weights of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_rgb: f64,
    pub lambda_depth: f64,
    pub lambda_tgsds: f64,
    /// Share of D-SSIM in the photometric loss.
    pub lambda_dssim: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rgb", self.lambda_rgb),
            ("lambda_depth", self.lambda_depth),
            ("lambda_tgsds", self.lambda_tgsds),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Invalid(format!("{name} = {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Invalid(format!("lambda_dssim = {} outside [0, 1]", self.lambda_dssim)));
        }
        Ok(())
    }
}

/// Mean absolute difference over the pixels where `mask` is nonzero (all
/// pixels without a mask) and every channel.
pub fn l1_loss(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<f64> {
    Ok(l1_with_grad(a, b, mask)?.0)
}

pub fn l1_with_grad(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<(f64, Raster)> {
    a.ensure_same_shape(b, "L1 loss")?;
    if let Some(m) = mask {
        a.ensure_same_size(m, "L1 mask")?;
    }
    let c = a.channels();
    let selected = |i: usize| mask.is_none_or(|m| m.data()[i] > 0.0);
    let count = (0..a.pixel_count()).filter(|&i| selected(i)).count() * c;
    if count == 0 {
        return Err(Error::Invalid("L1 loss over an empty mask".into()));
    }
    let mut sum = 0.0;
    let mut grad = Raster::new(a.width(), a.height(), c);
    for i in 0..a.pixel_count() {
        if !selected(i) {
            continue;
        }
        for k in 0..c {
            let d = a.data()[i * c + k] - b.data()[i * c + k];
            sum += d.abs();
            grad.data_mut()[i * c + k] = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            } / count as f64;
        }
    }
    Ok((sum / count as f64, grad))
}

/// `(1 − SSIM(a, b)) / 2`.
pub fn dssim_loss(a: &Raster, b: &Raster) -> Result<f64> {
    Ok((1.0 - ssim(a, b, None)?) / 2.0)
}

/// `(1−λ)·L1 + λ·D-SSIM` and its gradient with respect to `rendered`.
pub fn rgb_loss(rendered: &Raster, target: &Raster, weights: &LossWeights) -> Result<(f64, Raster)> {
    let lambda = weights.lambda_dssim;
    let (l1, mut grad) = l1_with_grad(rendered, target, None)?;
    let mut value = (1.0 - lambda) * l1;
    grad = grad.scale(1.0 - lambda);
    if lambda > 0.0 {
        let (s, g) = ssim_with_grad(rendered, target)?;
        value += lambda * (1.0 - s) / 2.0;
        grad.add_scaled(&g, -lambda / 2.0);
    }
    Ok((value, grad))
}

/// Depth loss against a monocular estimate aligned by least squares over
/// `valid`. The gradient holds the alignment fixed.
pub fn depth_loss(
    rendered_depth: &Raster,
    mono_depth: &Raster,
    valid: &Raster,
) -> Result<(f64, Raster, AlignmentParams)> {
    let params = align_depth_least_squares(mono_depth, rendered_depth, valid)?;
    let aligned = params.apply(mono_depth);
    let (value, grad) = l1_with_grad(rendered_depth, &aligned, Some(valid))?;
    Ok((value, grad, params))
}

/// Components of the training objective for one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub rgb: f64,
    pub depth: f64,
    /// Mean |gradient| of the guided score term, reported for logging.
    pub tgsds: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.lambda_rgb * c.rgb + w.lambda_depth * c.depth + w.lambda_tgsds * c.tgsds
}

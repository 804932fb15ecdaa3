//! Image quality metrics over whole images and inpainting masks.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::losses::ssim;
use crate::raster::Raster;

pub const PSNR_CAP: f64 = 99.0;

/// PSNR in dB for images in [0, 1], restricted to `mask` when given.
pub fn psnr(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<f64> {
    a.ensure_same_shape(b, "PSNR")?;
    if let Some(m) = mask {
        a.ensure_same_size(m, "PSNR mask")?;
    }
    let c = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.pixel_count() {
        if mask.is_some_and(|m| m.data()[i] <= 0.0) {
            continue;
        }
        for k in 0..c {
            let d = a.data()[i * c + k] - b.data()[i * c + k];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Invalid("PSNR over an empty mask".into()));
    }
    let mse = sum / n as f64;
    if mse < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMetrics {
    pub id: u32,
    pub psnr: f64,
    pub ssim: f64,
    pub masked_psnr: f64,
    pub masked_ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub views: Vec<ViewMetrics>,
}

impl MetricsReport {
    pub fn mean(&self) -> ViewMetrics {
        let n = self.views.len().max(1) as f64;
        let sum = |f: fn(&ViewMetrics) -> f64| self.views.iter().map(f).sum::<f64>() / n;
        ViewMetrics {
            id: 0,
            psnr: sum(|v| v.psnr),
            ssim: sum(|v| v.ssim),
            masked_psnr: sum(|v| v.masked_psnr),
            masked_ssim: sum(|v| v.masked_ssim),
        }
    }

    /// One line per view, `id psnr ssim masked_psnr masked_ssim`, then the
    /// mean as a comment line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.views {
            let _ = writeln!(
                out,
                "{} {:.6} {:.6} {:.6} {:.6}",
                v.id, v.psnr, v.ssim, v.masked_psnr, v.masked_ssim
            );
        }
        let m = self.mean();
        let _ = writeln!(
            out,
            "# mean {:.6} {:.6} {:.6} {:.6}",
            m.psnr, m.ssim, m.masked_psnr, m.masked_ssim
        );
        out
    }
}

/// One rendered view with its reference image and inpainting mask.
#[derive(Debug, Clone, Copy)]
pub struct EvalPair<'a> {
    pub id: u32,
    pub rendered: &'a Raster,
    pub reference: &'a Raster,
    pub mask: &'a Raster,
}

pub fn view_metrics(pair: &EvalPair<'_>) -> Result<ViewMetrics> {
    let err = |e: Error| Error::View {
        view: pair.id,
        message: e.to_string(),
    };
    Ok(ViewMetrics {
        id: pair.id,
        psnr: psnr(pair.rendered, pair.reference, None).map_err(err)?,
        ssim: ssim(pair.rendered, pair.reference, None).map_err(err)?,
        masked_psnr: psnr(pair.rendered, pair.reference, Some(pair.mask)).map_err(err)?,
        masked_ssim: ssim(pair.rendered, pair.reference, Some(pair.mask)).map_err(err)?,
    })
}

pub fn eval_metrics(pairs: &[EvalPair<'_>]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        views: pairs.iter().map(view_metrics).collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_cap() {
        let a = Raster::filled(12, 12, 3, 0.3);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
    }

    #[test]
    fn uniform_offset_of_a_tenth_is_twenty_db() {
        let a = Raster::filled(12, 12, 3, 0.3);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-9);
    }
}

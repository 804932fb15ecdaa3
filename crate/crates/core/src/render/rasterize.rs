use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene_io::{CameraIntrinsics, CameraPose};

use super::gaussian::GaussianCloud;
use super::project::{splat, Splat};

/// Per-Gaussian opacity ceiling.
pub const ALPHA_MAX: f64 = 0.999;
/// Compositing stops once transmittance drops below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Squared Mahalanobis radius of the evaluated footprint (3σ).
pub const FOOTPRINT_MAHALANOBIS_SQ: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Raster,
    /// Alpha-weighted expected depth, completed with the far depth.
    pub depth: Raster,
    pub final_transmittance: Raster,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    /// Index into `RenderState::splats`.
    pub splat: u32,
    pub alpha: f64,
    pub transmittance: f64,
    /// `o·G` exceeded [`ALPHA_MAX`]; alpha is constant there.
    pub clamped: bool,
    pub falloff: f64,
    /// Pixel minus projected mean.
    pub offset: Vector2<f64>,
}

/// Forward-pass intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct RenderState {
    pub(crate) splats: Vec<Splat>,
    pub(crate) contributions: Vec<Vec<Contribution>>,
    pub(crate) far_depth: f64,
    /// Splat that defines the far depth, if any Gaussian was visible.
    pub(crate) far_splat: Option<usize>,
    pub(crate) width: usize,
    pub(crate) height: usize,
}

impl RenderState {
    /// Number of Gaussians that survived culling.
    pub fn visible_count(&self) -> usize {
        self.splats.len()
    }

    /// Transmittance after every individual compositing step, all pixels.
    pub fn partial_transmittances(&self) -> Vec<f64> {
        self.contributions
            .iter()
            .flatten()
            .map(|c| c.transmittance * (1.0 - c.alpha))
            .collect()
    }

    /// Which Gaussians composite into which pixel, in order, with their
    /// opacity-ceiling flags. Rendering is smooth in the parameters only
    /// while this stays fixed.
    pub fn active_set(&self) -> Vec<Vec<(usize, bool)>> {
        self.contributions
            .iter()
            .map(|list| {
                list.iter()
                    .map(|c| (self.splats[c.splat as usize].projected.source_index, c.clamped))
                    .collect()
            })
            .collect()
    }

    /// Per pixel, `Σ αᵢTᵢ + T_final`; equals one up to rounding.
    pub fn weight_sums(&self) -> Vec<f64> {
        self.contributions
            .iter()
            .map(|list| {
                let weights: f64 = list.iter().map(|c| c.alpha * c.transmittance).sum();
                let t_final = list.last().map_or(1.0, |c| c.transmittance * (1.0 - c.alpha));
                weights + t_final
            })
            .collect()
    }
}

/// Renders color, expected depth and final transmittance, keeping the
/// state needed to backpropagate.
pub fn rasterize_with_state(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<(RenderOutput, RenderState)> {
    if cloud.is_empty() {
        return Err(Error::Invalid("cannot render an empty Gaussian cloud".into()));
    }
    let (w, h) = (intr.width, intr.height);
    let mut splats: Vec<Splat> = cloud
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| splat(g, i, pose, intr))
        .collect();
    splats.sort_by(|a, b| {
        a.projected
            .depth
            .total_cmp(&b.projected.depth)
            .then(a.projected.source_index.cmp(&b.projected.source_index))
    });

    let mut transmittance = vec![1.0f64; w * h];
    let mut contributions: Vec<Vec<Contribution>> = vec![Vec::new(); w * h];
    let mut color_acc = vec![0.0f64; w * h * 3];
    let mut depth_acc = vec![0.0f64; w * h];

    for (si, s) in splats.iter().enumerate() {
        let p = &s.projected;
        let rx = FOOTPRINT_MAHALANOBIS_SQ.sqrt() * p.cov2d[(0, 0)].sqrt();
        let ry = FOOTPRINT_MAHALANOBIS_SQ.sqrt() * p.cov2d[(1, 1)].sqrt();
        let x0 = (p.mean2d.x - rx).ceil().max(0.0);
        let x1 = (p.mean2d.x + rx).floor().min(w as f64 - 1.0);
        let y0 = (p.mean2d.y - ry).ceil().max(0.0);
        let y1 = (p.mean2d.y + ry).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let color = cloud.gaussians[p.source_index].color;
        for py in y0 as usize..=y1 as usize {
            for px in x0 as usize..=x1 as usize {
                let pi = py * w + px;
                let t = transmittance[pi];
                if t < TRANSMITTANCE_MIN {
                    continue;
                }
                let d = Vector2::new(px as f64 - p.mean2d.x, py as f64 - p.mean2d.y);
                let q = d.dot(&(s.conic * d));
                if q > FOOTPRINT_MAHALANOBIS_SQ {
                    continue;
                }
                let falloff = (-0.5 * q).exp();
                let raw = s.opacity * falloff;
                let (alpha, clamped) = if raw > ALPHA_MAX {
                    (ALPHA_MAX, true)
                } else {
                    (raw, false)
                };
                let weight = alpha * t;
                for c in 0..3 {
                    color_acc[pi * 3 + c] += weight * color[c];
                }
                depth_acc[pi] += weight * p.depth;
                contributions[pi].push(Contribution {
                    splat: si as u32,
                    alpha,
                    transmittance: t,
                    clamped,
                    falloff,
                    offset: d,
                });
                transmittance[pi] = t * (1.0 - alpha);
            }
        }
    }

    let far_splat = splats
        .iter()
        .enumerate()
        .fold(None, |best: Option<usize>, (i, s)| match best {
            Some(b) if splats[b].projected.depth >= s.projected.depth => Some(b),
            _ => Some(i),
        });
    let far_depth = far_splat.map_or(0.0, |i| splats[i].projected.depth);

    let bg = cloud.background;
    let mut color = Raster::new(w, h, 3);
    let mut depth = Raster::new(w, h, 1);
    let mut final_t = Raster::new(w, h, 1);
    for pi in 0..w * h {
        let (x, y) = (pi % w, pi / w);
        let t = transmittance[pi];
        for c in 0..3 {
            color.set(x, y, c, color_acc[pi * 3 + c] + t * bg[c]);
        }
        depth.set(x, y, 0, depth_acc[pi] + t * far_depth);
        final_t.set(x, y, 0, t);
    }
    Ok((
        RenderOutput {
            color,
            depth,
            final_transmittance: final_t,
        },
        RenderState {
            splats,
            contributions,
            far_depth,
            far_splat,
            width: w,
            height: h,
        },
    ))
}

/// Front-to-back alpha compositing of depth-sorted splats.
pub fn rasterize(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<RenderOutput> {
    rasterize_with_state(cloud, pose, intr).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Gaussian3D;

    fn cam() -> (CameraPose, CameraIntrinsics) {
        (
            CameraPose::identity(),
            CameraIntrinsics::new(16, 16, 20.0, 20.0, 8.0, 8.0).unwrap(),
        )
    }

    #[test]
    fn saturated_gaussian_at_pixel_center() {
        let (pose, intr) = cam();
        let mut g = Gaussian3D::isotropic([0.0, 0.0, 2.0], 0.05, 0.5, [1.0, 0.0, 0.0]);
        g.opacity_logit = 40.0;
        let cloud = GaussianCloud::new(vec![g], [0.0, 0.0, 1.0]);
        let out = rasterize(&cloud, &pose, &intr).unwrap();
        let px = out.color.pixel(8, 8);
        assert!((px[0] - 0.999).abs() < 1e-12);
        assert!((px[2] - 0.001).abs() < 1e-12);
    }

    #[test]
    fn two_half_transparent_layers() {
        let (pose, intr) = cam();
        let front = Gaussian3D::isotropic([0.0, 0.0, 1.0], 0.01, 0.5, [1.0, 0.0, 0.0]);
        let back = Gaussian3D::isotropic([0.0, 0.0, 3.0], 0.01, 0.5, [0.0, 0.0, 1.0]);
        let bg = [0.0, 1.0, 0.0];
        // insertion order must not matter
        let cloud = GaussianCloud::new(vec![back, front], bg);
        let out = rasterize(&cloud, &pose, &intr).unwrap();
        let px = out.color.pixel(8, 8);
        assert!((px[0] - 0.5).abs() < 1e-9, "{px:?}");
        assert!((px[2] - 0.25).abs() < 1e-9, "{px:?}");
        assert!((px[1] - 0.25).abs() < 1e-9, "{px:?}");
        assert!((out.final_transmittance.get(8, 8, 0) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn transparent_cloud_shows_background() {
        let (pose, intr) = cam();
        let mut g = Gaussian3D::isotropic([0.0, 0.0, 2.0], 0.3, 0.5, [1.0, 0.0, 0.0]);
        g.opacity_logit = -800.0;
        let bg = [0.2, 0.4, 0.6];
        let out = rasterize(&GaussianCloud::new(vec![g], bg), &pose, &intr).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(out.color.pixel(x, y), &bg);
                assert_eq!(out.final_transmittance.get(x, y, 0), 1.0);
            }
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let (pose, intr) = cam();
        assert!(rasterize(&GaussianCloud::new(vec![], [0.0; 3]), &pose, &intr).is_err());
    }

    #[test]
    fn depth_is_completed_with_far_depth() {
        let (pose, intr) = cam();
        let g = Gaussian3D::isotropic([0.0, 0.0, 2.0], 0.01, 0.5, [1.0; 3]);
        let out = rasterize(&GaussianCloud::new(vec![g], [0.0; 3]), &pose, &intr).unwrap();
        // uncovered pixels see the far depth, which is the only Gaussian's
        assert!((out.depth.get(0, 0, 0) - 2.0).abs() < 1e-12);
        assert!((out.depth.get(8, 8, 0) - 2.0).abs() < 1e-12);
    }
}

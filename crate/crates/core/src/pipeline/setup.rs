use std::fs;
use std::path::Path;

use crate::diffusion::{NoiseSchedule, PointTarget, ScoreModel, TinyAttentionUnet, TinyUnetWeights};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::render::{parse_point_cloud, Gaussian3D, GaussianCloud};
use crate::scene_io::{
    camera_center, read_png_rgb, DepthEstimatorKind, PipelineConfig, ScoreModelKind, SceneBundle,
};
use crate::view_select::Clustering;
use crate::warp::{ConstantPlane, DepthEstimator, RenderedPassthrough};

/// Pixel stride when seeding a cloud from view depth.
pub const INIT_STRIDE: usize = 4;
pub const INIT_OPACITY: f64 = 0.9;

pub fn build_schedule(config: &PipelineConfig) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(config.diffusion_timesteps)
}

/// The configured score model for `width × height` latents. Relative paths
/// resolve against `base_dir`.
pub fn build_score_model(
    config: &PipelineConfig,
    schedule: &NoiseSchedule,
    width: usize,
    height: usize,
    base_dir: &Path,
) -> Result<Box<dyn ScoreModel>> {
    match config.score_model {
        ScoreModelKind::PointTarget => {
            let target = match &config.point_target_image {
                Some(p) => {
                    let img = read_png_rgb(&base_dir.join(p))?;
                    if img.width() != width || img.height() != height {
                        return Err(Error::Dimension(format!(
                            "point target {p} is {}x{}, views are {width}x{height}",
                            img.width(),
                            img.height()
                        )));
                    }
                    img
                }
                None => Raster::solid_rgb(width, height, config.point_target_fill),
            };
            Ok(Box::new(PointTarget::new(target, schedule.clone())))
        }
        ScoreModelKind::TinyAttentionUnet => {
            let weights = match &config.tiny_unet_weights {
                Some(p) => TinyUnetWeights::load(&base_dir.join(p))?,
                None => TinyUnetWeights::seeded(config.seed),
            };
            Ok(Box::new(TinyAttentionUnet::new(weights, schedule.clone())))
        }
    }
}

/// The configured monocular depth estimator. The passthrough variant hands
/// back `rendered_depth`.
pub fn build_estimator(config: &PipelineConfig, rendered_depth: &Raster) -> Box<dyn DepthEstimator> {
    match config.depth_estimator {
        DepthEstimatorKind::RenderedPassthrough => Box::new(RenderedPassthrough {
            depth: rendered_depth.clone(),
        }),
        DepthEstimatorKind::ConstantPlane => Box::new(ConstantPlane::default()),
    }
}

/// The scene's stored clustering, or k-means over camera centers with K
/// capped at the number of views.
pub fn cluster_scene(scene: &SceneBundle, config: &PipelineConfig) -> Result<Clustering> {
    if let Some(c) = &scene.clustering {
        return Ok(c.clone());
    }
    let centers: Vec<_> = scene.views.iter().map(|v| camera_center(&v.pose)).collect();
    let k = config.k_clusters.min(scene.views.len());
    Clustering::compute(&scene.ids(), &centers, k, config.seed)
}

/// Position and RGB color.
pub type ColoredPoint = ([f64; 3], [f64; 3]);

/// Reads `points.txt` from a scene directory if present.
pub fn load_points(dir: &Path) -> Result<Option<Vec<ColoredPoint>>> {
    let path = dir.join("points.txt");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_point_cloud(&text).map(Some)
}

/// Isotropic Gaussians at the given points, sized to half the mean
/// nearest-neighbour distance.
pub fn cloud_from_points(points: &[ColoredPoint]) -> Result<GaussianCloud> {
    if points.is_empty() {
        return Err(Error::Invalid("point cloud is empty".into()));
    }
    let mut total = 0.0;
    for (i, (p, _)) in points.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, (q, _)) in points.iter().enumerate() {
            if i != j {
                let d = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt();
                if d > 0.0 {
                    best = best.min(d);
                }
            }
        }
        total += if best.is_finite() { best } else { 1.0 };
    }
    let sigma = 0.5 * total / points.len() as f64;
    let gaussians = points
        .iter()
        .map(|(p, c)| Gaussian3D::isotropic(*p, sigma, INIT_OPACITY, *c))
        .collect();
    Ok(GaussianCloud::new(gaussians, [0.0; 3]))
}

/// Unprojects every 4th pixel of the first view's depth, coloured by its
/// image, each Gaussian covering about one stride.
pub fn cloud_from_depth(scene: &SceneBundle) -> Result<GaussianCloud> {
    let view = scene
        .views
        .first()
        .ok_or_else(|| Error::Invalid("scene has no views".into()))?;
    let depth = view.depth.as_ref().ok_or_else(|| Error::View {
        view: view.id,
        message: "no points.txt and no depth map to initialize the cloud".into(),
    })?;
    let k = &view.intrinsics;
    let mut gaussians = Vec::new();
    for y in (0..k.height).step_by(INIT_STRIDE) {
        for x in (0..k.width).step_by(INIT_STRIDE) {
            let d = depth.get(x, y, 0);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let world = view.pose.camera_to_world(&k.unproject(x as f64, y as f64, d));
            let c = view.image.pixel(x, y);
            let sigma = 0.6 * INIT_STRIDE as f64 * d / k.fx;
            gaussians.push(Gaussian3D::isotropic(
                [world.x, world.y, world.z],
                sigma,
                INIT_OPACITY,
                [c[0], c[1], c[2]],
            ));
        }
    }
    if gaussians.is_empty() {
        return Err(Error::View {
            view: view.id,
            message: "depth map has no positive values".into(),
        });
    }
    Ok(GaussianCloud::new(gaussians, [0.0; 3]))
}

pub fn initial_cloud(
    scene: &SceneBundle,
    points: Option<&[ColoredPoint]>,
) -> Result<GaussianCloud> {
    match points {
        Some(p) => cloud_from_points(p),
        None => cloud_from_depth(scene),
    }
}

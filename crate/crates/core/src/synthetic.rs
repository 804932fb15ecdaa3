//! Synthetic scenes for tests, examples and the acceptance suite.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::geometry::{normalize_quat, quat_from_axis_angle};
use crate::raster::Raster;
use crate::render::{Gaussian3D, GaussianCloud};
use crate::scene_io::{CameraIntrinsics, CameraPose};

/// Identity-pose camera looking down +z at a `size × size` image.
pub fn front_camera(size: usize, focal: f64) -> (CameraPose, CameraIntrinsics) {
    let c = size as f64 / 2.0;
    (
        CameraPose::identity(),
        CameraIntrinsics::new(size, size, focal, focal, c, c).expect("valid intrinsics"),
    )
}

/// Up to `n` random Gaussians in front of [`front_camera`], each a few
/// pixels wide, with opacities in [0.1, 0.9].
pub fn random_cloud<R: Rng>(rng: &mut R, n: usize, size: usize, focal: f64) -> GaussianCloud {
    let half = size as f64 / 2.0;
    let gaussians = (0..n)
        .map(|_| {
            let z = rng.gen_range(2.0..4.0);
            let u = rng.gen_range(-0.8..0.8) * half;
            let v = rng.gen_range(-0.8..0.8) * half;
            let q = normalize_quat([
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
            // footprint of roughly 1.5 to 5 pixels standard deviation
            let px_to_world = z / focal;
            Gaussian3D {
                position: [u * px_to_world, v * px_to_world, z],
                rotation: q,
                log_scale: [0, 1, 2].map(|_| (rng.gen_range(1.5..5.0) * px_to_world).ln()),
                opacity_logit: crate::render::logit(rng.gen_range(0.1..0.9)),
                color: [rng.gen(), rng.gen(), rng.gen()],
            }
        })
        .collect();
    GaussianCloud::new(gaussians, [rng.gen(), rng.gen(), rng.gen()])
}

pub fn random_image<R: Rng>(rng: &mut R, width: usize, height: usize, channels: usize) -> Raster {
    Raster::from_fn(width, height, channels, |_, _, _| rng.gen())
}

/// A camera on a circle of `radius` around the origin at height `y`,
/// looking at `look_at`.
pub fn orbit_pose(angle: f64, radius: f64, y: f64, look_at: Vector3<f64>) -> CameraPose {
    let center = Vector3::new(radius * angle.sin(), y, -radius * angle.cos());
    look_at_pose(center, look_at)
}

/// World-to-camera pose of a camera at `center` looking at `target` with
/// world −y as up (image +y points down).
pub fn look_at_pose(center: Vector3<f64>, target: Vector3<f64>) -> CameraPose {
    let forward = (target - center).normalize();
    let down_hint = Vector3::new(0.0, 1.0, 0.0);
    let right = down_hint.cross(&forward).normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    CameraPose {
        rotation,
        translation: -(rotation * center),
    }
}

/// Rotation quaternion helper re-exported for scene construction.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> [f64; 4] {
    quat_from_axis_angle(axis, angle)
}

/// Eight-view scene of a textured plane partly hidden by an opaque
/// occluder, with each view's mask covering the occluder.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub scene: crate::scene_io::SceneBundle,
    /// Plane and occluder together; renders of it are the view images.
    pub cloud: GaussianCloud,
    pub plane_count: usize,
}

pub const TOY_SIZE: usize = 64;
pub const TOY_VIEWS: usize = 8;
/// Occluder alpha above which a pixel is masked.
pub const TOY_MASK_ALPHA: f64 = 0.02;

fn toy_texture(x: f64, y: f64) -> [f64; 3] {
    [
        0.5 + 0.35 * (2.1 * x + 0.4).sin(),
        0.5 + 0.35 * (1.7 * y - 0.3).cos(),
        0.5 + 0.3 * (1.3 * (x + y)).sin(),
    ]
}

/// Builds the scene. Cameras sit on an arc at distance 4 from the plane
/// `z = 0`; the occluder floats at `z = -1.2`.
pub fn toy_scene() -> crate::error::Result<ToyScene> {
    use crate::scene_io::{InpaintPrompts, SceneBundle, View};

    let flat = [0.045f64.ln(), 0.045f64.ln(), 0.01f64.ln()];
    let mut gaussians = Vec::new();
    let n = 36;
    let spacing = 0.06;
    for i in 0..n {
        for j in 0..n {
            let x = (i as f64 - (n - 1) as f64 / 2.0) * spacing;
            let y = (j as f64 - (n - 1) as f64 / 2.0) * spacing;
            gaussians.push(Gaussian3D {
                position: [x, y, 0.0],
                rotation: [1.0, 0.0, 0.0, 0.0],
                log_scale: flat,
                opacity_logit: crate::render::logit(0.95),
                color: toy_texture(x, y),
            });
        }
    }
    let plane_count = gaussians.len();
    let mut occluder = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let x = (i as f64 - 2.0) * 0.07 + 0.1;
            let y = (j as f64 - 2.0) * 0.07 - 0.05;
            occluder.push(Gaussian3D::isotropic(
                [x, y, -1.2],
                0.045,
                0.97,
                [0.85, 0.15, 0.1],
            ));
        }
    }
    gaussians.extend(occluder.iter().cloned());
    let cloud = GaussianCloud::new(gaussians, [0.0; 3]);
    let occluder_cloud = GaussianCloud::new(occluder, [0.0; 3]);

    let focal = 70.0;
    let c = TOY_SIZE as f64 / 2.0;
    let intrinsics = CameraIntrinsics::new(TOY_SIZE, TOY_SIZE, focal, focal, c, c)?;
    let mut views = Vec::with_capacity(TOY_VIEWS);
    for k in 0..TOY_VIEWS {
        let angle = -0.35 + 0.7 * k as f64 / (TOY_VIEWS - 1) as f64;
        let height = 0.15 * (k % 3) as f64 - 0.15;
        let pose = orbit_pose(angle, 4.0, height, Vector3::zeros());
        let full = crate::render::rasterize(&cloud, &pose, &intrinsics)?;
        let occ = crate::render::rasterize(&occluder_cloud, &pose, &intrinsics)?;
        let mask = Raster::from_fn(TOY_SIZE, TOY_SIZE, 1, |x, y, _| {
            let coverage = 1.0 - occ.final_transmittance.get(x, y, 0);
            if coverage > TOY_MASK_ALPHA {
                1.0
            } else {
                0.0
            }
        });
        views.push(View {
            id: k as u32,
            intrinsics,
            pose,
            image: full.color,
            mask,
            depth: Some(full.depth),
        });
    }
    let prompts = InpaintPrompts {
        positive: "a textured wall".into(),
        ..InpaintPrompts::default()
    };
    Ok(ToyScene {
        scene: SceneBundle::new(views, prompts)?,
        cloud,
        plane_count,
    })
}

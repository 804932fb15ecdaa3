use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::{normalize_quat, quat_to_matrix};
use crate::scene_io::{CameraIntrinsics, CameraPose};

use super::gaussian::Gaussian3D;

/// Gaussians closer than this (camera-space z) are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic screen-space dilation added to every projected covariance.
pub const LOW_PASS: f64 = 0.3;

/// A Gaussian splatted onto the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub source_index: usize,
}

/// Projection plus the intermediates the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub projected: ProjectedGaussian,
    pub cam_point: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    /// Covariance rotated into camera axes, `W Σ Wᵀ`.
    pub cam_cov: Matrix3<f64>,
    pub conic: Matrix2<f64>,
    pub opacity: f64,
}

pub(crate) fn splat(
    g: &Gaussian3D,
    index: usize,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Option<Splat> {
    let p = pose.world_to_camera(&g.mean());
    if p.z <= NEAR_PLANE {
        return None;
    }
    let (u, v) = intr.project(&p);
    let (z, z2) = (p.z, p.z * p.z);
    let jacobian = Matrix2x3::new(
        intr.fx / z,
        0.0,
        -intr.fx * p.x / z2,
        0.0,
        intr.fy / z,
        -intr.fy * p.y / z2,
    );
    let r = quat_to_matrix(normalize_quat(g.rotation));
    let d = Matrix3::from_diagonal(&Vector3::from(g.log_scale.map(|s| (2.0 * s).exp())));
    let sigma = r * d * r.transpose();
    let w = pose.rotation;
    let cam_cov = w * sigma * w.transpose();
    let mut cov2d = jacobian * cam_cov * jacobian.transpose();
    cov2d = (cov2d + cov2d.transpose()) * 0.5 + Matrix2::identity() * LOW_PASS;
    let conic = cov2d.try_inverse()?;
    Some(Splat {
        projected: ProjectedGaussian {
            mean2d: Vector2::new(u, v),
            cov2d,
            depth: z,
            source_index: index,
        },
        cam_point: p,
        jacobian,
        cam_cov,
        conic,
        opacity: g.opacity(),
    })
}

/// Projects one Gaussian with the local affine (EWA) approximation.
/// Returns `None` when the Gaussian is at or behind the near plane.
pub fn project_gaussian(
    g: &Gaussian3D,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Option<ProjectedGaussian> {
    splat(g, 0, pose, intr).map(|s| s.projected)
}

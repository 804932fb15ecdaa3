use nalgebra::Vector4;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::render::NEAR_PLANE;
use crate::scene_io::{CameraIntrinsics, CameraPose, View};

/// A reference view forward-warped into a target camera.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    /// Zero where `validity` is zero.
    pub warped_image: Raster,
    pub validity: Raster,
    /// Target-camera z where valid, zero elsewhere.
    pub warped_depth: Raster,
}

impl WarpResult {
    pub fn valid_count(&self) -> usize {
        self.validity.data().iter().filter(|&&v| v > 0.0).count()
    }
}

/// Target pixel and depth for one reference pixel, before rounding.
pub fn reproject(
    u: f64,
    v: f64,
    depth: f64,
    ref_intr: &CameraIntrinsics,
    ref_pose: &CameraPose,
    target_pose: &CameraPose,
    target_intr: &CameraIntrinsics,
) -> (f64, f64, f64) {
    let x = ref_intr.unproject(u, v, depth);
    let m = target_pose.matrix() * ref_pose.inverse_matrix();
    let y = m * Vector4::new(x.x, x.y, x.z, 1.0);
    let (tu, tv) = target_intr.project(&y.xyz());
    (tu, tv, y.z)
}

/// Splats every reference pixel with positive depth into the target view.
/// Collisions keep the smaller target depth; equal depths keep the earlier
/// pixel in scan order. Holes stay invalid.
pub fn warp_view(
    reference: &View,
    ref_depth: &Raster,
    target_pose: &CameraPose,
    target_intr: &CameraIntrinsics,
) -> Result<WarpResult> {
    let ri = &reference.intrinsics;
    if ref_depth.width() != ri.width || ref_depth.height() != ri.height || ref_depth.channels() != 1 {
        return Err(Error::Dimension(format!(
            "reference depth is {}x{}, view {} is {}x{}",
            ref_depth.width(),
            ref_depth.height(),
            reference.id,
            ri.width,
            ri.height
        )));
    }
    let m = target_pose.matrix() * reference.pose.inverse_matrix();
    let (tw, th) = (target_intr.width, target_intr.height);
    let mut warped_image = Raster::new(tw, th, 3);
    let mut validity = Raster::new(tw, th, 1);
    let mut warped_depth = Raster::new(tw, th, 1);
    let mut any_source = false;
    for v in 0..ri.height {
        for u in 0..ri.width {
            let d = ref_depth.get(u, v, 0);
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            any_source = true;
            let x = ri.unproject(u as f64, v as f64, d);
            let y = m * Vector4::new(x.x, x.y, x.z, 1.0);
            if y.z <= NEAR_PLANE {
                continue;
            }
            let (fu, fv) = target_intr.project(&y.xyz());
            let (tu, tv) = (fu.round(), fv.round());
            if tu < 0.0 || tv < 0.0 || tu >= tw as f64 || tv >= th as f64 {
                continue;
            }
            let (tu, tv) = (tu as usize, tv as usize);
            if validity.get(tu, tv, 0) > 0.0 && warped_depth.get(tu, tv, 0) <= y.z {
                continue;
            }
            validity.set(tu, tv, 0, 1.0);
            warped_depth.set(tu, tv, 0, y.z);
            warped_image
                .pixel_mut(tu, tv)
                .copy_from_slice(reference.image.pixel(u, v));
        }
    }
    if !any_source {
        return Err(Error::View {
            view: reference.id,
            message: "no valid source depth to warp".into(),
        });
    }
    Ok(WarpResult {
        warped_image,
        validity,
        warped_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn view(image: Raster) -> View {
        let (w, h) = (image.width(), image.height());
        View {
            id: 0,
            intrinsics: CameraIntrinsics::new(w, h, 100.0, 100.0, 50.0, 50.0).unwrap(),
            pose: CameraPose::identity(),
            mask: Raster::new(w, h, 1),
            image,
            depth: None,
        }
    }

    #[test]
    fn identity_warp_reproduces_the_image() {
        let img = Raster::from_fn(100, 100, 3, |x, y, c| ((x * 3 + y * 7 + c) % 11) as f64 / 10.0);
        let r = view(img.clone());
        let depth = Raster::from_fn(100, 100, 1, |x, _, _| 1.0 + x as f64 * 0.01);
        let w = warp_view(&r, &depth, &r.pose, &r.intrinsics).unwrap();
        assert_eq!(w.valid_count(), 100 * 100);
        assert_eq!(w.warped_image, img);
        let (u, v, _) = reproject(37.0, 61.0, 2.5, &r.intrinsics, &r.pose, &r.pose, &r.intrinsics);
        assert!((u - 37.0).abs() < 1e-6 && (v - 61.0).abs() < 1e-6);
    }

    #[test]
    fn fronto_parallel_plane_moves_outward() {
        let r = view(Raster::new(100, 100, 3));
        let target = CameraPose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0)).unwrap();
        let (u, v, z) = reproject(60.0, 50.0, 2.0, &r.intrinsics, &r.pose, &target, &r.intrinsics);
        assert!((u - 70.0).abs() < 1e-9 && (v - 50.0).abs() < 1e-9 && (z - 1.0).abs() < 1e-12);
        let mut img = Raster::new(100, 100, 3);
        img.pixel_mut(60, 50).copy_from_slice(&[1.0, 0.5, 0.25]);
        let r = view(img);
        let w = warp_view(&r, &Raster::filled(100, 100, 1, 2.0), &target, &r.intrinsics).unwrap();
        assert_eq!(w.warped_image.pixel(70, 50), &[1.0, 0.5, 0.25]);
        assert_eq!(w.warped_depth.get(70, 50, 0), 1.0);
    }

    #[test]
    fn nearer_source_wins_collisions() {
        // two pixels on the same ray from the target camera's point of view:
        // a pure translation along the optical axis keeps the center pixel
        // fixed whatever its depth
        let mut img = Raster::new(100, 100, 3);
        img.pixel_mut(50, 50).copy_from_slice(&[1.0, 0.0, 0.0]);
        img.pixel_mut(51, 50).copy_from_slice(&[0.0, 0.0, 1.0]);
        let r = view(img);
        let mut depth = Raster::new(100, 100, 1);
        depth.set(50, 50, 0, 2.0);
        // pixel 51 at depth 1 lands on the same target pixel as (50, 50)
        // when the camera shifts sideways by 0.01 per unit of inverse depth
        depth.set(51, 50, 0, 1.0);
        let target = CameraPose::new(Matrix3::identity(), Vector3::new(-0.02, 0.0, 0.0)).unwrap();
        let w = warp_view(&r, &depth, &target, &r.intrinsics).unwrap();
        // (50,50) at z=2 → u = 50 + 100·(-0.02)/2 = 49; (51,50) at z=1 → 51 - 2 = 49
        assert_eq!(w.valid_count(), 1);
        assert_eq!(w.warped_image.pixel(49, 50), &[0.0, 0.0, 1.0]);
        assert_eq!(w.warped_depth.get(49, 50, 0), 1.0);
    }

    #[test]
    fn no_depth_is_an_error() {
        let r = view(Raster::new(100, 100, 3));
        assert!(warp_view(&r, &Raster::new(100, 100, 1), &r.pose, &r.intrinsics).is_err());
    }
}

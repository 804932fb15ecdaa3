use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::geometry::rigid;

/// Pinhole intrinsics in pixels. Pixel `(u, v)` has its center at the
/// integer coordinate `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("camera size must be positive".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..=self.width as f64).contains(&self.cx)
            || !(0.0..=self.height as f64).contains(&self.cy)
        {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// The 3×3 matrix K.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Perspective projection of a camera-space point.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Camera-space point at depth `z` behind pixel `(u, v)`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }
}

/// World-to-camera rigid transform, COLMAP convention (+z forward, +y down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ORTHONORMAL_TOL: f64 = 1e-6;

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::Invalid("pose has non-finite entries".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > ORTHONORMAL_TOL {
            return Err(Error::Invalid(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {err:.3e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Invalid(format!("rotation determinant is {det}")));
        }
        Ok(())
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        rigid(&self.rotation, &self.translation)
    }

    /// Camera-to-world inverse of this pose.
    pub fn inverse_matrix(&self) -> Matrix4<f64> {
        let rt = self.rotation.transpose();
        rigid(&rt, &(-(rt * self.translation)))
    }
}

/// World-space position of the camera, `-Rᵀt`.
pub fn camera_center(pose: &CameraPose) -> Vector3<f64> {
    -(pose.rotation.transpose() * pose.translation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_of_translated_identity() {
        let pose = CameraPose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(camera_center(&pose), Vector3::new(-1.0, -2.0, -3.0));
        assert_eq!(camera_center(&CameraPose::identity()), Vector3::zeros());
    }

    #[test]
    fn center_under_half_turn_about_z() {
        let r = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let pose = CameraPose::new(r, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let c = camera_center(&pose);
        assert!((c - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(pose.world_to_camera(&c).norm() < 1e-9);
    }

    #[test]
    fn rejects_stretched_rotation() {
        let r = Matrix3::new(1.1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(r, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraPose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn intrinsics_reject_bad_values() {
        assert!(CameraIntrinsics::new(64, 48, 0.0, 10.0, 32.0, 24.0).is_err());
        assert!(CameraIntrinsics::new(64, 48, 10.0, 10.0, 65.0, 24.0).is_err());
        assert!(CameraIntrinsics::new(0, 48, 10.0, 10.0, 0.0, 24.0).is_err());
        assert!(CameraIntrinsics::new(64, 48, 10.0, 10.0, 64.0, 0.0).is_ok());
    }

    #[test]
    fn project_unproject_round_trip() {
        let k = CameraIntrinsics::new(100, 100, 80.0, 90.0, 50.0, 40.0).unwrap();
        let p = k.unproject(12.5, 77.0, 3.0);
        let (u, v) = k.project(&p);
        assert!((u - 12.5).abs() < 1e-12 && (v - 77.0).abs() < 1e-12);
    }
}

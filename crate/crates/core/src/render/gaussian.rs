use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{normalize_quat, quat_to_matrix};

/// One optimizable 3D Gaussian with a view-independent color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub position: [f64; 3],
    /// `(w, x, y, z)`, renormalized after every optimizer step.
    pub rotation: [f64; 4],
    /// Natural log of the per-axis standard deviation.
    pub log_scale: [f64; 3],
    /// Opacity is `sigmoid(opacity_logit)`.
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Gaussian3D {
    pub fn isotropic(position: [f64; 3], sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [sigma.ln(); 3],
            opacity_logit: logit(opacity),
            color,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn mean(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// World-space covariance.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_from_rs(normalize_quat(self.rotation), self.log_scale)
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.rotation)
            .chain(&self.log_scale)
            .chain(&self.color)
            .chain(std::iter::once(&self.opacity_logit))
            .all(|v| v.is_finite())
    }

    fn to_f32s(self) -> [f32; 14] {
        let mut out = [0f32; 14];
        let vals = self
            .position
            .iter()
            .chain(&self.rotation)
            .chain(&self.log_scale)
            .chain(std::iter::once(&self.opacity_logit))
            .chain(&self.color);
        for (o, v) in out.iter_mut().zip(vals) {
            *o = *v as f32;
        }
        out
    }

    fn from_f32s(v: &[f32]) -> Self {
        let f = |i: usize| v[i] as f64;
        Self {
            position: [f(0), f(1), f(2)],
            rotation: [f(3), f(4), f(5), f(6)],
            log_scale: [f(7), f(8), f(9)],
            opacity_logit: f(10),
            color: [f(11), f(12), f(13)],
        }
    }
}

/// `R · diag(exp(2·log_scale)) · Rᵀ` for a unit quaternion.
pub fn covariance_from_rs(rotation: [f64; 4], log_scale: [f64; 3]) -> Matrix3<f64> {
    let r = quat_to_matrix(rotation);
    let d = Matrix3::from_diagonal(&Vector3::from(log_scale.map(|s| (2.0 * s).exp())));
    let sigma = r * d * r.transpose();
    // exact symmetry
    (sigma + sigma.transpose()) * 0.5
}

/// An ordered set of Gaussians and the color shown where nothing covers.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
    pub background: [f64; 3],
}

const SIDECAR_FLOATS: usize = 14;

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian3D>, background: [f64; 3]) -> Self {
        Self {
            gaussians,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaussians.is_empty() {
            return Err(Error::Invalid("Gaussian cloud is empty".into()));
        }
        if let Some(i) = self.gaussians.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("Gaussian {i} has non-finite parameters")));
        }
        Ok(())
    }

    /// Drops Gaussians whose opacity is below `min_opacity`; returns how many.
    pub fn prune_transparent(&mut self, min_opacity: f64) -> usize {
        let before = self.gaussians.len();
        self.gaussians.retain(|g| g.opacity() >= min_opacity);
        before - self.gaussians.len()
    }

    /// `x y z r g b` per line with colors in [0, 255].
    pub fn to_point_text(&self) -> String {
        let mut s = String::new();
        for g in &self.gaussians {
            let [x, y, z] = g.position;
            let [r, gg, b] = g.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
            s.push_str(&format!("{x} {y} {z} {r} {gg} {b}\n"));
        }
        s
    }

    /// Full parameters as little-endian `f32`: background RGB, then 14
    /// values per Gaussian (position, rotation, log-scale, opacity logit,
    /// color).
    pub fn to_sidecar_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * (3 + SIDECAR_FLOATS * self.len()));
        for c in self.background {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for g in &self.gaussians {
            for v in g.to_f32s() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_sidecar_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) || bytes.len() < 12 || !(bytes.len() / 4 - 3).is_multiple_of(SIDECAR_FLOATS) {
            return Err(Error::Invalid(format!(
                "cloud sidecar has {} bytes, not 4·(3 + 14·n)",
                bytes.len()
            )));
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let background = [floats[0] as f64, floats[1] as f64, floats[2] as f64];
        let gaussians = floats[3..]
            .chunks_exact(SIDECAR_FLOATS)
            .map(Gaussian3D::from_f32s)
            .collect();
        Ok(Self {
            gaussians,
            background,
        })
    }

    pub fn save(&self, txt_path: &Path, sidecar_path: &Path) -> Result<()> {
        fs::write(txt_path, self.to_point_text()).map_err(|e| Error::io(txt_path, e))?;
        fs::write(sidecar_path, self.to_sidecar_bytes()).map_err(|e| Error::io(sidecar_path, e))
    }

    pub fn load_sidecar(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_sidecar_bytes(&bytes)
    }
}

/// Point cloud file: one `x y z r g b` per line, colors in [0, 255].
pub fn parse_point_cloud(text: &str) -> Result<Vec<([f64; 3], [f64; 3])>> {
    let mut pts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse("points", idx + 1, "non-numeric field"))?;
        if vals.len() != 6 {
            return Err(Error::parse(
                "points",
                idx + 1,
                format!("expected `x y z r g b`, found {} fields", vals.len()),
            ));
        }
        if vals[3..].iter().any(|c| !(0.0..=255.0).contains(c)) {
            return Err(Error::parse("points", idx + 1, "color outside [0, 255]"));
        }
        pts.push((
            [vals[0], vals[1], vals[2]],
            [vals[3] / 255.0, vals[4] / 255.0, vals[5] / 255.0],
        ));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat_from_axis_angle;
    use proptest::prelude::*;

    #[test]
    fn identity_covariance() {
        let s = covariance_from_rs([1.0, 0.0, 0.0, 0.0], [0.0; 3]);
        assert_eq!(s, Matrix3::identity());
    }

    #[test]
    fn axis_aligned_scaling() {
        let s = covariance_from_rs([1.0, 0.0, 0.0, 0.0], [2f64.ln(), 0.0, 0.0]);
        assert!((s - Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let q = quat_from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let s = covariance_from_rs(q, [2f64.ln(), 0.0, 0.0]);
        assert!((s - Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn sidecar_round_trip_is_f32_exact() {
        let cloud = GaussianCloud::new(
            vec![Gaussian3D::isotropic([0.5, -1.0, 2.0], 0.1, 0.7, [0.25, 0.5, 1.0])],
            [0.0, 0.5, 1.0],
        );
        let back = GaussianCloud::from_sidecar_bytes(&cloud.to_sidecar_bytes()).unwrap();
        let again = GaussianCloud::from_sidecar_bytes(&back.to_sidecar_bytes()).unwrap();
        assert_eq!(back, again);
        assert!((back.gaussians[0].opacity() - 0.7).abs() < 1e-6);
        assert!(GaussianCloud::from_sidecar_bytes(&[0u8; 20]).is_err());
    }

    #[test]
    fn point_cloud_parsing() {
        let pts = parse_point_cloud("# pts\n0 1 2 255 0 51\n").unwrap();
        assert_eq!(pts, vec![([0.0, 1.0, 2.0], [1.0, 0.0, 0.2])]);
        assert!(parse_point_cloud("0 1 2 300 0 0\n").is_err());
        assert!(parse_point_cloud("0 1 2 3\n").is_err());
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_positive_definite(
            q in proptest::array::uniform4(-1.0f64..1.0),
            s in proptest::array::uniform3(-3.0f64..2.0),
        ) {
            prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let sigma = covariance_from_rs(normalize_quat(q), s);
            prop_assert!((sigma - sigma.transpose()).abs().max() <= 1e-12);
            let eig = sigma.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e > 0.0), "{eig:?}");
        }
    }
}

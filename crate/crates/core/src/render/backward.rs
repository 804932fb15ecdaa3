use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{normalize_quat, quat_norm, quat_to_matrix, quat_to_matrix_vjp};
use crate::raster::Raster;
use crate::scene_io::{CameraIntrinsics, CameraPose};

use super::gaussian::GaussianCloud;
use super::rasterize::{rasterize_with_state, RenderState};

/// Gradients of a scalar loss with respect to every Gaussian parameter,
/// indexed like `GaussianCloud::gaussians`.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGradients {
    pub position: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub log_scale: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

impl CloudGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            position: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            log_scale: vec![[0.0; 3]; n],
            opacity_logit: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.color.len()
    }

    pub fn is_empty(&self) -> bool {
        self.color.is_empty()
    }

    /// `self += s * other`.
    pub fn accumulate(&mut self, other: &CloudGradients, s: f64) {
        fn add<const N: usize>(a: &mut [[f64; N]], b: &[[f64; N]], s: f64) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..N {
                    x[k] += s * y[k];
                }
            }
        }
        add(&mut self.position, &other.position, s);
        add(&mut self.rotation, &other.rotation, s);
        add(&mut self.log_scale, &other.log_scale, s);
        add(&mut self.color, &other.color, s);
        for (x, y) in self.opacity_logit.iter_mut().zip(&other.opacity_logit) {
            *x += s * y;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.position
            .iter()
            .flatten()
            .chain(self.rotation.iter().flatten())
            .chain(self.log_scale.iter().flatten())
            .chain(self.color.iter().flatten())
            .chain(&self.opacity_logit)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Screen-space gradient accumulators for one splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    depth: f64,
    color: Vector3<f64>,
}

/// Backpropagates upstream color/depth gradients through a retained
/// forward pass. Per-pixel partials are reduced in pixel-major order.
pub fn backward_from_state(
    cloud: &GaussianCloud,
    state: &RenderState,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    upstream_color: &Raster,
    upstream_depth: Option<&Raster>,
) -> Result<CloudGradients> {
    let (w, h) = (state.width, state.height);
    if upstream_color.width() != w || upstream_color.height() != h || upstream_color.channels() != 3 {
        return Err(Error::Dimension("upstream color gradient does not match render".into()));
    }
    if let Some(d) = upstream_depth {
        if d.width() != w || d.height() != h || d.channels() != 1 {
            return Err(Error::Dimension("upstream depth gradient does not match render".into()));
        }
    }
    let bg = Vector3::from(cloud.background);
    let mut sg = vec![SplatGrad::default(); state.splats.len()];
    let mut far_grad = 0.0;

    for py in 0..h {
        for px in 0..w {
            let list = &state.contributions[py * w + px];
            let gc = Vector3::from_column_slice(upstream_color.pixel(px, py));
            let gd = upstream_depth.map_or(0.0, |d| d.get(px, py, 0));
            if gc.iter().all(|&v| v == 0.0) && gd == 0.0 {
                continue;
            }
            let t_final = match list.last() {
                Some(c) => c.transmittance * (1.0 - c.alpha),
                None => 1.0,
            };
            far_grad += gd * t_final;
            // contribution of everything behind the current splat
            let mut rest_color = bg * t_final;
            let mut rest_depth = state.far_depth * t_final;
            for c in list.iter().rev() {
                let s = &state.splats[c.splat as usize];
                let color = Vector3::from(cloud.gaussians[s.projected.source_index].color);
                let z = s.projected.depth;
                let weight = c.alpha * c.transmittance;
                let g = &mut sg[c.splat as usize];
                g.color += gc * weight;
                g.depth += gd * weight;
                let inv = 1.0 / (1.0 - c.alpha);
                let d_alpha = gc.dot(&(color * c.transmittance - rest_color * inv))
                    + gd * (z * c.transmittance - rest_depth * inv);
                rest_color += color * weight;
                rest_depth += z * weight;
                if c.clamped {
                    continue;
                }
                g.opacity += d_alpha * c.falloff;
                // alpha = o·exp(-q/2), q = dᵀ A d, d = pixel - mean
                let d_q = -0.5 * c.alpha * d_alpha;
                g.mean2d += (s.conic * c.offset) * (-2.0 * d_q);
                g.conic += c.offset * c.offset.transpose() * d_q;
            }
        }
    }

    let mut grads = CloudGradients::zeros(cloud.len());
    for (si, s) in state.splats.iter().enumerate() {
        let g = &sg[si];
        let idx = s.projected.source_index;
        let gauss = &cloud.gaussians[idx];
        grads.color[idx] = [g.color.x, g.color.y, g.color.z];

        let o = s.opacity;
        grads.opacity_logit[idx] = g.opacity * o * (1.0 - o);

        // conic = cov2d⁻¹
        let g_cov2d = -(s.conic.transpose() * g.conic * s.conic.transpose());
        let j = &s.jacobian;
        let m = &s.cam_cov;
        let g_cam_cov: Matrix3<f64> = j.transpose() * g_cov2d * j;
        let g_j: Matrix2x3<f64> = g_cov2d * j * m.transpose() + g_cov2d.transpose() * j * m;

        let p = s.cam_point;
        let (z, z2, z3) = (p.z, p.z * p.z, p.z * p.z * p.z);
        let (fx, fy) = (intr.fx, intr.fy);
        let mut g_p = Vector3::zeros();
        // mean2d = (fx x/z + cx, fy y/z + cy)
        g_p.x += g.mean2d.x * fx / z;
        g_p.y += g.mean2d.y * fy / z;
        g_p.z += -g.mean2d.x * fx * p.x / z2 - g.mean2d.y * fy * p.y / z2;
        // Jacobian entries
        g_p.z += -g_j[(0, 0)] * fx / z2;
        g_p.x += -g_j[(0, 2)] * fx / z2;
        g_p.z += g_j[(0, 2)] * 2.0 * fx * p.x / z3;
        g_p.z += -g_j[(1, 1)] * fy / z2;
        g_p.y += -g_j[(1, 2)] * fy / z2;
        g_p.z += g_j[(1, 2)] * 2.0 * fy * p.y / z3;
        // depth enters compositing directly and through the far depth
        g_p.z += g.depth;
        if state.far_splat == Some(si) {
            g_p.z += far_grad;
        }
        let g_mu = pose.rotation.transpose() * g_p;
        grads.position[idx] = [g_mu.x, g_mu.y, g_mu.z];

        // Σ = R D Rᵀ with D = diag(exp(2s))
        let wr = &pose.rotation;
        let g_sigma = wr.transpose() * g_cam_cov * wr;
        let q_unit = normalize_quat(gauss.rotation);
        let r = quat_to_matrix(q_unit);
        let dvec = Vector3::from(gauss.log_scale.map(|v| (2.0 * v).exp()));
        let d = Matrix3::from_diagonal(&dvec);
        let g_r = g_sigma * r * d + g_sigma.transpose() * r * d;
        let g_d = r.transpose() * g_sigma * r;
        grads.log_scale[idx] = [
            g_d[(0, 0)] * 2.0 * dvec.x,
            g_d[(1, 1)] * 2.0 * dvec.y,
            g_d[(2, 2)] * 2.0 * dvec.z,
        ];
        let g_unit = quat_to_matrix_vjp(q_unit, &g_r);
        let norm = quat_norm(gauss.rotation);
        let radial: f64 = (0..4).map(|k| q_unit[k] * g_unit[k]).sum();
        grads.rotation[idx] = [0, 1, 2, 3].map(|k| (g_unit[k] - q_unit[k] * radial) / norm);
    }
    Ok(grads)
}

/// Re-runs the forward pass and returns analytic parameter gradients for the
/// given upstream gradients of the color and depth rasters.
pub fn render_backward(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    upstream_color: &Raster,
    upstream_depth: Option<&Raster>,
) -> Result<CloudGradients> {
    let (_, state) = rasterize_with_state(cloud, pose, intr)?;
    backward_from_state(cloud, &state, pose, intr, upstream_color, upstream_depth)
}

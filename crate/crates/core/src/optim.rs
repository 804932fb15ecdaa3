//! Adam over Gaussian-cloud parameters.

use crate::error::{Error, Result};
use crate::geometry::normalize_quat;
use crate::render::{CloudGradients, GaussianCloud};
use crate::scene_io::PipelineConfig;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl LearningRates {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            position: config.lr_position,
            rotation: config.lr_rotation,
            scale: config.lr_scale,
            opacity: config.lr_opacity,
            color: config.lr_color,
        }
    }
}

/// Moment estimates for a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One bias-corrected Adam update; `step` counts from 1.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, step: u64) {
        let bc1 = 1.0 - BETA1.powf(step as f64);
        let bc2 = 1.0 - BETA2.powf(step as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }

    fn retain(&mut self, keep: &[bool], width: usize) {
        for buf in [&mut self.m, &mut self.v] {
            let mut out = Vec::with_capacity(buf.len());
            for (i, chunk) in buf.chunks(width).enumerate() {
                if keep[i] {
                    out.extend_from_slice(chunk);
                }
            }
            *buf = out;
        }
    }
}

/// Optimizer state for a whole cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub lr: LearningRates,
    pub step: u64,
    pub position: Moments,
    pub rotation: Moments,
    pub scale: Moments,
    pub opacity: Moments,
    pub color: Moments,
}

impl OptimState {
    pub fn new(n: usize, lr: LearningRates) -> Self {
        Self {
            lr,
            step: 0,
            position: Moments::zeros(3 * n),
            rotation: Moments::zeros(4 * n),
            scale: Moments::zeros(3 * n),
            opacity: Moments::zeros(n),
            color: Moments::zeros(3 * n),
        }
    }

    /// Drops the moments of Gaussians whose `keep` entry is false.
    pub fn retain(&mut self, keep: &[bool]) {
        self.position.retain(keep, 3);
        self.rotation.retain(keep, 4);
        self.scale.retain(keep, 3);
        self.opacity.retain(keep, 1);
        self.color.retain(keep, 3);
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite {name} gradient at entry {i}"))),
        None => Ok(()),
    }
}

fn flatten<const N: usize>(v: &[[f64; N]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

/// One Adam step on every parameter group, then quaternion
/// renormalization. Nothing is modified when a gradient is non-finite.
pub fn adam_step(cloud: &mut GaussianCloud, state: &mut OptimState, grads: &CloudGradients) -> Result<()> {
    let n = cloud.len();
    if grads.len() != n || state.opacity.m.len() != n {
        return Err(Error::Dimension(format!(
            "cloud has {n} Gaussians, gradients {} and optimizer {}",
            grads.len(),
            state.opacity.m.len()
        )));
    }
    let gp = flatten(&grads.position);
    let gr = flatten(&grads.rotation);
    let gs = flatten(&grads.log_scale);
    let gc = flatten(&grads.color);
    check_finite("position", &gp)?;
    check_finite("rotation", &gr)?;
    check_finite("scale", &gs)?;
    check_finite("opacity", &grads.opacity_logit)?;
    check_finite("color", &gc)?;
    state.step += 1;
    let step = state.step;
    let mut p: Vec<f64> = cloud.gaussians.iter().flat_map(|g| g.position).collect();
    let mut r: Vec<f64> = cloud.gaussians.iter().flat_map(|g| g.rotation).collect();
    let mut s: Vec<f64> = cloud.gaussians.iter().flat_map(|g| g.log_scale).collect();
    let mut o: Vec<f64> = cloud.gaussians.iter().map(|g| g.opacity_logit).collect();
    let mut c: Vec<f64> = cloud.gaussians.iter().flat_map(|g| g.color).collect();
    state.position.update(&mut p, &gp, state.lr.position, step);
    state.rotation.update(&mut r, &gr, state.lr.rotation, step);
    state.scale.update(&mut s, &gs, state.lr.scale, step);
    state.opacity.update(&mut o, &grads.opacity_logit, state.lr.opacity, step);
    state.color.update(&mut c, &gc, state.lr.color, step);
    for (i, g) in cloud.gaussians.iter_mut().enumerate() {
        g.position.copy_from_slice(&p[3 * i..3 * i + 3]);
        g.rotation = normalize_quat([r[4 * i], r[4 * i + 1], r[4 * i + 2], r[4 * i + 3]]);
        g.log_scale.copy_from_slice(&s[3 * i..3 * i + 3]);
        g.opacity_logit = o[i];
        g.color.copy_from_slice(&c[3 * i..3 * i + 3]);
    }
    Ok(())
}

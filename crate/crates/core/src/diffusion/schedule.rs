use crate::error::{Error, Result};
use crate::raster::Raster;

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

/// Cumulative signal levels ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T from a linear β ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(timesteps: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::Invalid("noise schedule needs at least one timestep".into()));
        }
        let mut alpha_bar = Vec::with_capacity(timesteps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=timesteps {
            let beta = if timesteps == 1 {
                BETA_START
            } else {
                BETA_START + (BETA_END - BETA_START) * (t - 1) as f64 / (timesteps - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Ok(Self { alpha_bar })
    }

    pub fn timesteps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    /// Panics if `t > T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Uniform timesteps `τ_k = ⌊k·T/steps⌋` for k = 0..=steps.
    pub fn sub_schedule(&self, steps: usize) -> Result<Vec<usize>> {
        let t = self.timesteps();
        if steps == 0 || steps > t {
            return Err(Error::Invalid(format!(
                "sub-schedule of {steps} steps over {t} timesteps"
            )));
        }
        Ok((0..=steps).map(|k| k * t / steps).collect())
    }

    /// Forward noising `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
    pub fn add_noise(&self, x0: &Raster, noise: &Raster, t: usize) -> Result<Raster> {
        x0.ensure_same_shape(noise, "noise")?;
        let a = self.alpha_bar(t);
        Ok(x0.zip_map(noise, |x, e| a.sqrt() * x + (1.0 - a).sqrt() * e))
    }
}

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{guided_noise, Condition, NoiseSchedule, ScoreModel};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene_io::{PipelineConfig, SdsWeighting};
use crate::warp::EdgeMap;

/// Timestep range and weighting of score distillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdsSettings {
    pub t_min_frac: f64,
    pub t_max_frac: f64,
    pub weighting: SdsWeighting,
}

impl SdsSettings {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            t_min_frac: config.t_min_frac,
            t_max_frac: config.t_max_frac,
            weighting: config.sds_weighting,
        }
    }

    /// Inclusive integer timestep range.
    pub fn range(&self, schedule: &NoiseSchedule) -> Result<(usize, usize)> {
        let t = schedule.timesteps() as f64;
        let lo = ((self.t_min_frac * t).ceil() as usize).max(1);
        let hi = (self.t_max_frac * t).floor() as usize;
        if lo > hi || hi > schedule.timesteps() {
            return Err(Error::Invalid(format!(
                "empty timestep range [{}, {}]·T",
                self.t_min_frac, self.t_max_frac
            )));
        }
        Ok((lo, hi))
    }

    pub fn weight(&self, schedule: &NoiseSchedule, t: usize) -> f64 {
        match self.weighting {
            SdsWeighting::OneMinusAlphaBar => 1.0 - schedule.alpha_bar(t),
            SdsWeighting::Constant => 1.0,
        }
    }
}

/// One score-distillation draw.
#[derive(Debug, Clone)]
pub struct SdsSample {
    pub t: usize,
    pub epsilon: Raster,
    pub predicted: Raster,
    pub weight: f64,
}

impl SdsSample {
    /// `w(t)·(ε̂ − ε)`.
    pub fn gradient(&self) -> Raster {
        let w = self.weight;
        self.predicted.zip_map(&self.epsilon, |p, e| w * (p - e))
    }
}

/// Draws t and ε, noises `x` and queries the guided score model.
pub fn sds_sample<R: Rng + ?Sized>(
    x: &Raster,
    model: &dyn ScoreModel,
    cond: &Condition,
    schedule: &NoiseSchedule,
    rng: &mut R,
    settings: &SdsSettings,
) -> Result<SdsSample> {
    let (lo, hi) = settings.range(schedule)?;
    let t = rng.gen_range(lo..=hi);
    let epsilon = Raster::from_fn(x.width(), x.height(), x.channels(), |_, _, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let x_t = schedule.add_noise(x, &epsilon, t)?;
    let predicted = guided_noise(model, &x_t, t, cond, None)?;
    x.ensure_same_shape(&predicted, "predicted noise")?;
    Ok(SdsSample {
        t,
        epsilon,
        predicted,
        weight: settings.weight(schedule, t),
    })
}

/// Score-distillation gradient `w(t)·(ε̂ − ε)` with respect to `x`.
pub fn sds_grad<R: Rng + ?Sized>(
    x: &Raster,
    model: &dyn ScoreModel,
    cond: &Condition,
    schedule: &NoiseSchedule,
    rng: &mut R,
    settings: &SdsSettings,
) -> Result<Raster> {
    Ok(sds_sample(x, model, cond, schedule, rng, settings)?.gradient())
}

/// The conditioned variant: the model sees the view mask and the warped
/// edge and depth maps, both zeroed where `validity` is 0, and the gradient
/// is zeroed outside the mask.
#[allow(clippy::too_many_arguments)]
pub fn tg_sds_grad<R: Rng + ?Sized>(
    x: &Raster,
    mask: &Raster,
    edge_map: &EdgeMap,
    depth_map: &Raster,
    validity: &Raster,
    model: &dyn ScoreModel,
    cond: &Condition,
    schedule: &NoiseSchedule,
    rng: &mut R,
    settings: &SdsSettings,
) -> Result<Raster> {
    x.ensure_same_size(mask, "guided score mask")?;
    let gate = |r: &Raster| r.zip_map(validity, |v, ok| if ok > 0.0 { v } else { 0.0 });
    let mut c = cond.clone();
    c.mask = mask.clone();
    c.edge_map = Some(EdgeMap {
        edges: gate(&edge_map.edges),
    });
    c.depth_map = Some(gate(depth_map));
    c.validity = Some(validity.clone());
    c.validate(x.width(), x.height())?;
    let grad = sds_grad(x, model, &c, schedule, rng, settings)?;
    Ok(grad.mul_pixelwise(&mask.map(|m| if m > 0.0 { 1.0 } else { 0.0 })))
}

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::EdgeMap;

use super::{AfpContext, NoiseSchedule};

/// Opaque text prompt token routed to the score model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptHandle(pub String);

impl PromptHandle {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }
}

/// Conditioning for one noise prediction.
#[derive(Debug, Clone)]
pub struct Condition {
    pub text: PromptHandle,
    /// Used for the unconditional branch of classifier-free guidance.
    pub negative_text: PromptHandle,
    /// 1 marks pixels to generate.
    pub mask: Raster,
    pub edge_map: Option<EdgeMap>,
    pub depth_map: Option<Raster>,
    pub validity: Option<Raster>,
    pub guidance_scale: f64,
    pub cond_scale_texture: f64,
    pub cond_scale_depth: f64,
}

impl Condition {
    pub fn new(text: PromptHandle, negative_text: PromptHandle, mask: Raster) -> Self {
        Self {
            text,
            negative_text,
            mask,
            edge_map: None,
            depth_map: None,
            validity: None,
            guidance_scale: 1.0,
            cond_scale_texture: 1.0,
            cond_scale_depth: 1.0,
        }
    }

    /// Checks that every raster matches a latent of `width × height`.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let check = |r: &Raster, what: &str| -> Result<()> {
            if r.width() != width || r.height() != height || r.channels() != 1 {
                return Err(Error::Dimension(format!(
                    "{what} is {}x{}x{}, latent is {width}x{height}",
                    r.width(),
                    r.height(),
                    r.channels()
                )));
            }
            Ok(())
        };
        check(&self.mask, "condition mask")?;
        if let Some(e) = &self.edge_map {
            check(&e.edges, "edge condition")?;
        }
        if let Some(d) = &self.depth_map {
            check(d, "depth condition")?;
        }
        if let Some(v) = &self.validity {
            check(v, "validity")?;
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::Invalid(format!("guidance scale {}", self.guidance_scale)));
        }
        for (name, s) in [("texture", self.cond_scale_texture), ("depth", self.cond_scale_depth)] {
            if !(s.is_finite() && (0.0..=2.0).contains(&s)) {
                return Err(Error::Invalid(format!("{name} condition scale {s} outside [0, 2]")));
            }
        }
        Ok(())
    }

    /// The same condition with the negative prompt as its text.
    pub fn negative(&self) -> Condition {
        Condition {
            text: self.negative_text.clone(),
            ..self.clone()
        }
    }
}

/// Keys and values of one attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFeatures {
    pub keys: DMatrix<f64>,
    pub values: DMatrix<f64>,
}

/// Conditional noise predictor ε̂(x_t, t, c).
pub trait ScoreModel: Send + Sync {
    fn predict_noise(
        &self,
        latent: &Raster,
        t: usize,
        cond: &Condition,
        afp: Option<&AfpContext>,
    ) -> Result<Raster>;

    /// Prediction together with the keys and values of every attention
    /// block, for use as reference features.
    fn predict_noise_capturing(
        &self,
        latent: &Raster,
        t: usize,
        cond: &Condition,
    ) -> Result<(Raster, Vec<BlockFeatures>)> {
        Ok((self.predict_noise(latent, t, cond, None)?, Vec::new()))
    }

    fn attention_blocks(&self) -> usize {
        0
    }
}

/// Classifier-free guidance `ε̂_neg + g·(ε̂_pos − ε̂_neg)`; a scale of 1
/// evaluates only the positive branch. `afp` holds the reference features
/// for the positive and the negative branch.
pub fn guided_noise(
    model: &dyn ScoreModel,
    latent: &Raster,
    t: usize,
    cond: &Condition,
    afp: Option<(&AfpContext, &AfpContext)>,
) -> Result<Raster> {
    let pos = model.predict_noise(latent, t, cond, afp.map(|a| a.0))?;
    if cond.guidance_scale == 1.0 {
        return Ok(pos);
    }
    let neg = model.predict_noise(latent, t, &cond.negative(), afp.map(|a| a.1))?;
    let g = cond.guidance_scale;
    Ok(neg.zip_map(&pos, |n, p| n + g * (p - n)))
}

/// Signal level used for noise prediction at timestep `t`. At t = 0 the
/// latent is noise-free and ε is undefined for an x0-parameterized model,
/// so the level of t = 1 stands in.
pub(crate) fn prediction_level(schedule: &NoiseSchedule, t: usize) -> f64 {
    schedule.alpha_bar(t.max(1))
}

/// Exact noise predictor for a point-mass data distribution at `target`:
/// `ε̂ = (x_t − √ᾱ_t·x0*) / √(1−ᾱ_t)`. Ignores every condition.
#[derive(Debug, Clone)]
pub struct PointTarget {
    pub target: Raster,
    pub schedule: NoiseSchedule,
}

impl PointTarget {
    pub fn new(target: Raster, schedule: NoiseSchedule) -> Self {
        Self { target, schedule }
    }
}

impl ScoreModel for PointTarget {
    fn predict_noise(
        &self,
        latent: &Raster,
        t: usize,
        _cond: &Condition,
        _afp: Option<&AfpContext>,
    ) -> Result<Raster> {
        latent.ensure_same_shape(&self.target, "point target")?;
        if t > self.schedule.timesteps() {
            return Err(Error::Invalid(format!("timestep {t} beyond schedule")));
        }
        let a = prediction_level(&self.schedule, t);
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        Ok(latent.zip_map(&self.target, |x, x0| (x - sa * x0) / sn))
    }
}

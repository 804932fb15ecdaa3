use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::Raster;

use super::{guided_noise, AfpContext, BlockFeatures, Condition, NoiseSchedule, ScoreModel};

/// A latent together with its timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentImage {
    pub data: Raster,
    pub t: usize,
}

/// Attention features recorded at each timestep of one sampling run, per
/// guidance branch.
#[derive(Debug, Clone, Default)]
pub struct FeatureCapture {
    pub positive: BTreeMap<usize, Vec<BlockFeatures>>,
    /// Empty when sampling ran without guidance.
    pub negative: BTreeMap<usize, Vec<BlockFeatures>>,
}

/// Reference features for every timestep of a sampling run. Each guidance
/// branch attends to the features of the same branch in the references.
#[derive(Debug, Clone)]
pub struct AfpSchedule {
    pub positive: BTreeMap<usize, AfpContext>,
    pub negative: BTreeMap<usize, AfpContext>,
}

fn contexts(
    captures: &[&BTreeMap<usize, Vec<BlockFeatures>>],
    lambda_a: f64,
    clip_image_hook: Option<fn(&mut nalgebra::DMatrix<f64>)>,
) -> Result<BTreeMap<usize, AfpContext>> {
    let mut contexts = BTreeMap::new();
    for &t in captures[0].keys() {
        let mut ctx = AfpContext {
            reference_keys: Vec::with_capacity(captures.len()),
            reference_values: Vec::with_capacity(captures.len()),
            lambda_a,
            clip_image_hook,
        };
        for (r, cap) in captures.iter().enumerate() {
            let blocks = cap.get(&t).ok_or_else(|| {
                Error::Invalid(format!("reference {r} has no features at timestep {t}"))
            })?;
            ctx.reference_keys.push(blocks.iter().map(|b| b.keys.clone()).collect());
            ctx.reference_values.push(blocks.iter().map(|b| b.values.clone()).collect());
        }
        contexts.insert(t, ctx);
    }
    Ok(contexts)
}

impl AfpSchedule {
    /// Combines the captures of N_k reference runs over the same timesteps.
    pub fn from_captures(
        captures: &[FeatureCapture],
        lambda_a: f64,
        clip_image_hook: Option<fn(&mut nalgebra::DMatrix<f64>)>,
    ) -> Result<Self> {
        if captures.is_empty() {
            return Err(Error::Invalid("attention propagation needs a reference".into()));
        }
        let pos: Vec<_> = captures.iter().map(|c| &c.positive).collect();
        let neg: Vec<_> = captures.iter().map(|c| &c.negative).collect();
        Ok(Self {
            positive: contexts(&pos, lambda_a, clip_image_hook)?,
            negative: contexts(&neg, lambda_a, clip_image_hook)?,
        })
    }

    /// Contexts for the positive and negative branch at timestep `t`. A
    /// run without guidance never consults the negative one, so it falls
    /// back to the positive features.
    fn at(&self, t: usize) -> Result<(&AfpContext, &AfpContext)> {
        let pos = self
            .positive
            .get(&t)
            .ok_or_else(|| Error::Invalid(format!("no reference features for timestep {t}")))?;
        Ok((pos, self.negative.get(&t).unwrap_or(pos)))
    }
}

fn check_finite(r: &Raster, what: &str, k: usize, t: usize) -> Result<()> {
    if r.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} step {k} (t = {t}) produced non-finite values")))
    }
}

/// One deterministic DDIM transition from `t` to `t_next` given ε̂.
fn ddim_step(schedule: &NoiseSchedule, x: &Raster, eps: &Raster, t: usize, t_next: usize) -> Raster {
    let (a, an) = (schedule.alpha_bar(t), schedule.alpha_bar(t_next));
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let (san, snn) = (an.sqrt(), (1.0 - an).sqrt());
    x.zip_map(eps, |x, e| {
        let x0 = (x - sn * e) / sa;
        san * x0 + snn * e
    })
}

/// Deterministic inversion along the uniform sub-schedule, unguided.
/// Returns the latents at τ_0 = 0 (the input) through τ_steps = T.
pub fn ddim_invert(
    x0: &Raster,
    steps: usize,
    model: &dyn ScoreModel,
    cond: &Condition,
    schedule: &NoiseSchedule,
) -> Result<Vec<LatentImage>> {
    let tau = schedule.sub_schedule(steps)?;
    let mut traj = Vec::with_capacity(tau.len());
    traj.push(LatentImage {
        data: x0.clone(),
        t: 0,
    });
    for k in 0..steps {
        let (t, t_next) = (tau[k], tau[k + 1]);
        let x = &traj[k].data;
        let eps = model.predict_noise(x, t, cond, None)?;
        x.ensure_same_shape(&eps, "predicted noise")?;
        let next = ddim_step(schedule, x, &eps, t, t_next);
        check_finite(&next, "inversion", k, t)?;
        traj.push(LatentImage {
            data: next,
            t: t_next,
        });
    }
    Ok(traj)
}

/// Deterministic sampling from `x_t` at T down to 0 with classifier-free
/// guidance. With `afp`, attention blocks blend in reference features.
/// With `known`, an inversion trajectory over the same sub-schedule, pixels
/// outside `cond.mask` are reset to the trajectory after every step.
pub fn ddim_sample(
    x_t: &Raster,
    steps: usize,
    model: &dyn ScoreModel,
    cond: &Condition,
    afp: Option<&AfpSchedule>,
    schedule: &NoiseSchedule,
    known: Option<&[LatentImage]>,
) -> Result<Raster> {
    sample_impl(x_t, steps, model, cond, afp, schedule, known, None)
}

/// [`ddim_sample`] without reference features, recording every attention
/// block's keys and values along the way.
pub fn ddim_sample_capturing(
    x_t: &Raster,
    steps: usize,
    model: &dyn ScoreModel,
    cond: &Condition,
    schedule: &NoiseSchedule,
    known: Option<&[LatentImage]>,
) -> Result<(Raster, FeatureCapture)> {
    let mut capture = FeatureCapture::default();
    let out = sample_impl(x_t, steps, model, cond, None, schedule, known, Some(&mut capture))?;
    Ok((out, capture))
}

#[allow(clippy::too_many_arguments)]
fn sample_impl(
    x_t: &Raster,
    steps: usize,
    model: &dyn ScoreModel,
    cond: &Condition,
    afp: Option<&AfpSchedule>,
    schedule: &NoiseSchedule,
    known: Option<&[LatentImage]>,
    mut capture: Option<&mut FeatureCapture>,
) -> Result<Raster> {
    let tau = schedule.sub_schedule(steps)?;
    if let Some(known) = known {
        if known.len() != tau.len() || known.iter().zip(&tau).any(|(l, t)| l.t != *t) {
            return Err(Error::Invalid(
                "known-region trajectory does not follow the sampling sub-schedule".into(),
            ));
        }
        if !cond.mask.same_size(x_t) {
            return Err(Error::Dimension("mask and latent differ in size".into()));
        }
    }
    let mut x = x_t.clone();
    for k in (1..=steps).rev() {
        let (t, t_next) = (tau[k], tau[k - 1]);
        let eps = match capture.as_deref_mut() {
            Some(cap) => {
                let (pos, feats) = model.predict_noise_capturing(&x, t, cond)?;
                cap.positive.insert(t, feats);
                if cond.guidance_scale == 1.0 {
                    pos
                } else {
                    let (neg, feats) = model.predict_noise_capturing(&x, t, &cond.negative())?;
                    cap.negative.insert(t, feats);
                    let g = cond.guidance_scale;
                    neg.zip_map(&pos, |n, p| n + g * (p - n))
                }
            }
            None => {
                let ctx = afp.map(|a| a.at(t)).transpose()?;
                guided_noise(model, &x, t, cond, ctx)?
            }
        };
        x.ensure_same_shape(&eps, "predicted noise")?;
        x = ddim_step(schedule, &x, &eps, t, t_next);
        if let Some(known) = known {
            let reference = &known[k - 1].data;
            let c = x.channels();
            for (i, px) in x.data_mut().chunks_mut(c).enumerate() {
                if cond.mask.data()[i] <= 0.0 {
                    px.copy_from_slice(&reference.data()[i * c..(i + 1) * c]);
                }
            }
        }
        check_finite(&x, "sampling", steps - k, t)?;
    }
    Ok(x)
}

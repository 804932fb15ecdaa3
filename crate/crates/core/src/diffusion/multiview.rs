use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene_io::{InpaintPrompts, PipelineConfig};
use crate::view_select::ReferenceSet;

use super::{
    ddim_invert, ddim_sample, ddim_sample_capturing, AfpSchedule, Condition, FeatureCapture,
    NoiseSchedule, PromptHandle, ScoreModel,
};

/// A rendered view to inpaint.
#[derive(Debug, Clone)]
pub struct InpaintInput {
    pub id: u32,
    pub image: Raster,
    pub mask: Raster,
}

pub fn inpaint_condition(input: &InpaintInput, prompts: &InpaintPrompts, config: &PipelineConfig) -> Condition {
    let mut cond = Condition::new(
        PromptHandle::new(prompts.positive.clone()),
        PromptHandle::new(prompts.negative.clone()),
        input.mask.clone(),
    );
    cond.guidance_scale = config.guidance_scale;
    cond.cond_scale_texture = config.cond_scale_texture;
    cond.cond_scale_depth = config.cond_scale_depth;
    cond
}

/// Inverts one view and samples it back under the inpainting constraint.
pub fn inpaint_view(
    input: &InpaintInput,
    model: &dyn ScoreModel,
    cond: &Condition,
    steps: usize,
    schedule: &NoiseSchedule,
    afp: Option<&AfpSchedule>,
) -> Result<Raster> {
    let traj = ddim_invert(&input.image, steps, model, cond, schedule)?;
    let start = &traj[traj.len() - 1].data;
    ddim_sample(start, steps, model, cond, afp, schedule, Some(&traj))
}

fn inpaint_reference(
    input: &InpaintInput,
    model: &dyn ScoreModel,
    cond: &Condition,
    steps: usize,
    schedule: &NoiseSchedule,
) -> Result<(Raster, FeatureCapture)> {
    let traj = ddim_invert(&input.image, steps, model, cond, schedule)?;
    let start = &traj[traj.len() - 1].data;
    ddim_sample_capturing(start, steps, model, cond, schedule, Some(&traj))
}

/// Inpaints the reference views first, recording their attention features,
/// then every other view with those features blended in with weight
/// `lambda_a`. Results follow the order of `inputs`.
pub fn inpaint_multiview(
    inputs: &[InpaintInput],
    references: &ReferenceSet,
    model: &dyn ScoreModel,
    prompts: &InpaintPrompts,
    config: &PipelineConfig,
    schedule: &NoiseSchedule,
) -> Result<Vec<Raster>> {
    let steps = config.ddim_steps;
    let is_ref = |id: u32| references.reference_view_ids.contains(&id);
    for &r in &references.reference_view_ids {
        if !inputs.iter().any(|i| i.id == r) {
            return Err(Error::View {
                view: r,
                message: "reference view has no rendered input".into(),
            });
        }
    }
    let use_afp = config.lambda_a > 0.0 && model.attention_blocks() > 0;
    let mut results: Vec<Option<Raster>> = vec![None; inputs.len()];
    let mut captures = Vec::new();
    for &r in &references.reference_view_ids {
        let (i, input) = inputs.iter().enumerate().find(|(_, v)| v.id == r).expect("checked above");
        let cond = inpaint_condition(input, prompts, config);
        if use_afp {
            let (out, cap) = inpaint_reference(input, model, &cond, steps, schedule)?;
            results[i] = Some(out);
            captures.push(cap);
        } else {
            results[i] = Some(inpaint_view(input, model, &cond, steps, schedule, None)?);
        }
    }
    let afp = if use_afp {
        Some(AfpSchedule::from_captures(&captures, config.lambda_a, None)?)
    } else {
        None
    };
    for (i, input) in inputs.iter().enumerate() {
        if is_ref(input.id) {
            continue;
        }
        let cond = inpaint_condition(input, prompts, config);
        results[i] = Some(inpaint_view(input, model, &cond, steps, schedule, afp.as_ref())?);
    }
    Ok(results.into_iter().map(|r| r.expect("every view inpainted")).collect())
}

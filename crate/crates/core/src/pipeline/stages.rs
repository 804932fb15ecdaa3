use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{inpaint_condition, inpaint_multiview, InpaintInput, ScoreModel};
use crate::error::{Error, Result};
use crate::losses::{
    depth_loss, l1_with_grad, rgb_loss, tg_sds_grad, total_loss, LossComponents, LossWeights,
    SdsSettings,
};
use crate::optim::{adam_step, LearningRates, OptimState};
use crate::raster::Raster;
use crate::render::{backward_from_state, rasterize, rasterize_with_state, GaussianCloud};
use crate::scene_io::{PipelineConfig, SceneBundle, View};
use crate::warp::build_conditions;

use super::setup::{build_estimator, build_schedule, cluster_scene};
use super::CoarseTargets;

pub const PRUNE_EVERY: usize = 500;
pub const PRUNE_OPACITY: f64 = 0.005;
/// Added to the configured seed for the fine stage's noise draws.
pub const FINE_SEED_OFFSET: u64 = 0x5EED_F1E0;

/// Summary of one optimization stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: String,
    pub iterations: usize,
    pub final_components: LossComponents,
    pub final_total: f64,
    pub wall_time: Duration,
    /// `iter loss_rgb loss_depth tgsds_gradnorm total` per iteration.
    pub log: Vec<String>,
}

impl StageReport {
    pub fn log_text(&self) -> String {
        let mut s = String::from("# iter loss_rgb loss_depth tgsds_gradnorm total\n");
        for line in &self.log {
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

fn log_line(iter: usize, c: &LossComponents, total: f64) -> String {
    format!(
        "{iter:>6} {:>14.8} {:>14.8} {:>14.8} {:>14.8}",
        c.rgb, c.depth, c.tgsds, total
    )
}

pub fn loss_weights(config: &PipelineConfig) -> LossWeights {
    LossWeights {
        lambda_rgb: config.lambda_rgb,
        lambda_depth: config.lambda_depth,
        lambda_tgsds: config.lambda_tgsds,
        lambda_dssim: config.lambda_dssim,
    }
}

/// Depth loss over positive target pixels. A constant target cannot be
/// scale-aligned, so it is only shifted onto the rendered depth.
pub fn depth_term(rendered: &Raster, target: &Raster) -> Result<(f64, Raster)> {
    let valid = target.map(|d| if d.is_finite() && d > 0.0 { 1.0 } else { 0.0 });
    match depth_loss(rendered, target, &valid) {
        Ok((v, g, _)) => Ok((v, g)),
        Err(Error::Numeric(_)) => {
            let (mut sum, mut n) = (0.0, 0usize);
            for ((r, t), ok) in rendered.data().iter().zip(target.data()).zip(valid.data()) {
                if *ok > 0.0 {
                    sum += r - t;
                    n += 1;
                }
            }
            if n == 0 {
                return Ok((0.0, Raster::new(rendered.width(), rendered.height(), 1)));
            }
            let shifted = target.map(|t| t + sum / n as f64);
            l1_with_grad(rendered, &shifted, Some(&valid))
        }
        Err(e) => Err(e),
    }
}

fn prune(cloud: &mut GaussianCloud, state: &mut OptimState) {
    let keep: Vec<bool> = cloud.gaussians.iter().map(|g| g.opacity() >= PRUNE_OPACITY).collect();
    if keep.iter().all(|k| *k) || keep.iter().all(|k| !*k) {
        return;
    }
    state.retain(&keep);
    cloud.prune_transparent(PRUNE_OPACITY);
}

/// One photometric/depth step on `view`, plus an extra color gradient.
#[allow(clippy::too_many_arguments)]
fn fit_step(
    cloud: &mut GaussianCloud,
    state: &mut OptimState,
    view: &View,
    out: &crate::render::RenderOutput,
    render_state: &crate::render::RenderState,
    image_target: &Raster,
    depth_target: &Raster,
    weights: &LossWeights,
    extra_color: Option<(&Raster, f64)>,
    (stage, iter): (&str, usize),
) -> Result<LossComponents> {
    let (l_rgb, g_rgb) = rgb_loss(&out.color, image_target, weights)?;
    let (l_depth, g_depth) = depth_term(&out.depth, depth_target)?;
    let mut upstream = g_rgb.scale(weights.lambda_rgb);
    let mut tgsds = 0.0;
    if let Some((g, gradnorm)) = extra_color {
        upstream.add_scaled(g, weights.lambda_tgsds);
        tgsds = gradnorm;
    }
    let components = LossComponents {
        rgb: l_rgb,
        depth: l_depth,
        tgsds,
    };
    if !total_loss(&components, weights).is_finite() {
        return Err(Error::Numeric(format!("{stage} iteration {iter}: non-finite loss")));
    }
    let upstream_depth = g_depth.scale(weights.lambda_depth);
    let grads = backward_from_state(
        cloud,
        render_state,
        &view.pose,
        &view.intrinsics,
        &upstream,
        Some(&upstream_depth),
    )?;
    adam_step(cloud, state, &grads).map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("{stage} iteration {iter}: {m}")),
        other => other,
    })?;
    Ok(components)
}

/// Result of the coarse stage.
#[derive(Debug, Clone)]
pub struct CoarseOutput {
    pub cloud: GaussianCloud,
    pub targets: CoarseTargets,
    pub report: StageReport,
}

/// Inpaints every rendered view with reference feature propagation, then
/// fits the cloud to the inpainted images and their estimated depth,
/// visiting views round-robin by id.
pub fn run_coarse(
    scene: &SceneBundle,
    mut cloud: GaussianCloud,
    model: &dyn ScoreModel,
    config: &PipelineConfig,
) -> Result<CoarseOutput> {
    let start = Instant::now();
    config.validate()?;
    cloud.validate()?;
    let schedule = build_schedule(config)?;
    let clustering = cluster_scene(scene, config)?;
    let mut inputs = Vec::with_capacity(scene.views.len());
    let mut source_depths = Vec::with_capacity(scene.views.len());
    for v in &scene.views {
        let out = rasterize(&cloud, &v.pose, &v.intrinsics)?;
        inputs.push(InpaintInput {
            id: v.id,
            image: out.color,
            mask: v.mask.clone(),
        });
        source_depths.push(out.depth);
    }
    let inpainted = inpaint_multiview(&inputs, &clustering.references, model, &scene.prompts, config, &schedule)?;
    let inpainted: Vec<Raster> = inpainted.iter().map(|r| r.map(|v| v.clamp(0.0, 1.0))).collect();
    let mut depths = Vec::with_capacity(inpainted.len());
    for (img, src) in inpainted.iter().zip(&source_depths) {
        depths.push(build_estimator(config, src).estimate(img)?);
    }
    let targets = CoarseTargets::new(scene.ids(), inpainted, depths)?;
    let weights = loss_weights(config);
    let mut state = OptimState::new(cloud.len(), LearningRates::from_config(config));
    let mut log = Vec::with_capacity(config.coarse_iters);
    let mut last = LossComponents::default();
    for it in 0..config.coarse_iters {
        let idx = it % scene.views.len();
        let view = &scene.views[idx];
        let (out, rs) = rasterize_with_state(&cloud, &view.pose, &view.intrinsics)?;
        last = fit_step(
            &mut cloud,
            &mut state,
            view,
            &out,
            &rs,
            &targets.images[idx],
            &targets.depths[idx],
            &weights,
            None,
            ("coarse", it),
        )?;
        let total = total_loss(&last, &weights);
        log.push(log_line(it, &last, total));
        if config.prune_low_opacity && (it + 1) % PRUNE_EVERY == 0 {
            prune(&mut cloud, &mut state);
        }
    }
    let final_total = total_loss(&last, &weights);
    Ok(CoarseOutput {
        cloud,
        targets,
        report: StageReport {
            stage: "coarse".into(),
            iterations: config.coarse_iters,
            final_components: last,
            final_total,
            wall_time: start.elapsed(),
            log,
        },
    })
}

/// Result of the fine stage.
#[derive(Debug, Clone)]
pub struct FineOutput {
    pub cloud: GaussianCloud,
    pub report: StageReport,
}

/// Refines the cloud with the guided score term, conditioned on edges and
/// depth warped from each view's cluster reference, together with the
/// photometric and depth terms against the coarse targets.
pub fn run_fine(
    scene: &SceneBundle,
    mut cloud: GaussianCloud,
    targets: &CoarseTargets,
    model: &dyn ScoreModel,
    config: &PipelineConfig,
) -> Result<FineOutput> {
    let start = Instant::now();
    config.validate()?;
    cloud.validate()?;
    let schedule = build_schedule(config)?;
    let clustering = cluster_scene(scene, config)?;
    let settings = SdsSettings::from_config(config);
    let weights = loss_weights(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(FINE_SEED_OFFSET));
    let mut state = OptimState::new(cloud.len(), LearningRates::from_config(config));
    let mut log = Vec::with_capacity(config.fine_iters);
    let mut last = LossComponents::default();
    let target_idx: Vec<usize> = scene.ids().iter().map(|&id| targets.index(id)).collect::<Result<_>>()?;
    for it in 0..config.fine_iters {
        let idx = it % scene.views.len();
        let view = &scene.views[idx];
        let (out, rs) = rasterize_with_state(&cloud, &view.pose, &view.intrinsics)?;
        let guided = if config.lambda_tgsds > 0.0 {
            let ref_id = clustering.reference_for(view.id)?;
            let ref_pos = scene.view_index(ref_id).ok_or_else(|| Error::View {
                view: ref_id,
                message: "reference view missing from scene".into(),
            })?;
            let ref_view = &scene.views[ref_pos];
            let ref_depth = if ref_pos == idx {
                out.depth.clone()
            } else {
                rasterize(&cloud, &ref_view.pose, &ref_view.intrinsics)?.depth
            };
            let ref_image = &targets.images[target_idx[ref_pos]];
            let reference = View {
                image: ref_image.clone(),
                depth: Some(build_estimator(config, &ref_depth).estimate(ref_image)?),
                ..ref_view.clone()
            };
            let estimator = build_estimator(config, &out.depth);
            let conds = build_conditions(
                &reference,
                view,
                &ref_depth,
                estimator.as_ref(),
                config.depth_condition_source,
            )?;
            let input = InpaintInput {
                id: view.id,
                image: out.color.clone(),
                mask: view.mask.clone(),
            };
            let cond = inpaint_condition(&input, &scene.prompts, config);
            let g = tg_sds_grad(
                &out.color,
                &view.mask,
                &conds.edges,
                &conds.depth,
                &conds.validity,
                model,
                &cond,
                &schedule,
                &mut rng,
                &settings,
            )?;
            let norm = g.data().iter().map(|v| v.abs()).sum::<f64>() / g.data().len() as f64;
            Some((g, norm))
        } else {
            None
        };
        let t = target_idx[idx];
        last = fit_step(
            &mut cloud,
            &mut state,
            view,
            &out,
            &rs,
            &targets.images[t],
            &targets.depths[t],
            &weights,
            guided.as_ref().map(|(g, n)| (g, *n)),
            ("fine", it),
        )?;
        let total = total_loss(&last, &weights);
        log.push(log_line(it, &last, total));
        if config.prune_low_opacity && (it + 1) % PRUNE_EVERY == 0 {
            prune(&mut cloud, &mut state);
        }
    }
    let final_total = total_loss(&last, &weights);
    Ok(FineOutput {
        cloud,
        report: StageReport {
            stage: "fine".into(),
            iterations: config.fine_iters,
            final_components: last,
            final_total,
            wall_time: start.elapsed(),
            log,
        },
    })
}

/// Coarse then fine, handing the cloud and targets over in their stored
/// precision so the result equals running the stages separately through
/// files.
pub fn run_pipeline(
    scene: &SceneBundle,
    cloud: GaussianCloud,
    model: &dyn ScoreModel,
    config: &PipelineConfig,
) -> Result<(CoarseOutput, FineOutput)> {
    let coarse = run_coarse(scene, cloud, model, config)?;
    let handed = GaussianCloud::from_sidecar_bytes(&coarse.cloud.to_sidecar_bytes())?;
    let targets = CoarseTargets::from_bytes(&coarse.targets.to_bytes(), "coarse targets")?;
    let fine = run_fine(scene, handed, &targets, model, config)?;
    Ok((coarse, fine))
}

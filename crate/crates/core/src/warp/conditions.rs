use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scene_io::{DepthConditionSource, View};

use super::{align_depth_least_squares, canny_edges, warp_view, AlignmentParams, DepthEstimator, EdgeMap};

/// Structural conditions for one target view derived from its reference.
#[derive(Debug, Clone)]
pub struct ViewConditions {
    pub edges: EdgeMap,
    pub depth: Raster,
    pub validity: Raster,
    pub warped_image: Raster,
    pub alignment: AlignmentParams,
}

/// Scale and shift for the reference's monocular depth. A constant
/// estimate cannot carry a scale, so it only gets shifted.
fn align_or_shift(mono: &Raster, rendered: &Raster, valid: &Raster) -> Result<AlignmentParams> {
    match align_depth_least_squares(mono, rendered, valid) {
        Err(Error::Numeric(_)) => {
            let (mut sum, mut n) = (0.0, 0usize);
            for ((m, r), v) in mono.data().iter().zip(rendered.data()).zip(valid.data()) {
                if *v > 0.0 {
                    sum += r - m;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::Numeric("no rendered depth to align against".into()));
            }
            Ok(AlignmentParams {
                scale: 1.0,
                shift: sum / n as f64,
            })
        }
        other => other,
    }
}

/// Warps `reference` into `target` and extracts the edge and depth
/// conditions. The reference's monocular depth is `reference.depth` when
/// present, otherwise `estimator` run on its image; either way it is
/// aligned to `rendered_ref_depth` before warping.
pub fn build_conditions(
    reference: &View,
    target: &View,
    rendered_ref_depth: &Raster,
    estimator: &dyn DepthEstimator,
    source: DepthConditionSource,
) -> Result<ViewConditions> {
    let mono = match &reference.depth {
        Some(d) => d.clone(),
        None => estimator.estimate(&reference.image)?,
    };
    let valid = rendered_ref_depth.map(|d| if d.is_finite() && d > 0.0 { 1.0 } else { 0.0 });
    let alignment = align_or_shift(&mono, rendered_ref_depth, &valid)?;
    let aligned = alignment.apply(&mono);
    let warp = warp_view(reference, &aligned, &target.pose, &target.intrinsics)?;
    let edges = canny_edges(&warp.warped_image);
    let depth = match source {
        DepthConditionSource::Warped => warp.warped_depth.clone(),
        DepthConditionSource::Estimator => estimator.estimate(&warp.warped_image)?,
    };
    Ok(ViewConditions {
        edges,
        depth,
        validity: warp.validity,
        warped_image: warp.warped_image,
        alignment,
    })
}

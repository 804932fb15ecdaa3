//! Reference-to-member forward warping and the structural conditions built
//! from it.

mod align;
mod canny;
mod conditions;
mod dibr;
mod estimator;

pub use align::{align_depth_least_squares, AlignmentParams};
pub use canny::{canny_edges, EdgeMap};
pub use conditions::{build_conditions, ViewConditions};
pub use dibr::{reproject, warp_view, WarpResult};
pub use estimator::{ConstantPlane, DepthEstimator, RenderedPassthrough};

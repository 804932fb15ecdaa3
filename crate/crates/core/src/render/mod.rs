//! Differentiable rendering of 3D Gaussians: projection, front-to-back
//! compositing of color and depth, and the analytic backward pass.

mod backward;
mod gaussian;
mod project;
mod rasterize;

pub use backward::{backward_from_state, render_backward, CloudGradients};
pub use gaussian::{
    covariance_from_rs, logit, parse_point_cloud, sigmoid, Gaussian3D, GaussianCloud,
};
pub use project::{project_gaussian, ProjectedGaussian, LOW_PASS, NEAR_PLANE};
pub use rasterize::{
    rasterize, rasterize_with_state, RenderOutput, RenderState, ALPHA_MAX,
    FOOTPRINT_MAHALANOBIS_SQ, TRANSMITTANCE_MIN,
};

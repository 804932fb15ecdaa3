//! Coarse-to-fine, text-guided inpainting of 3D Gaussian scenes.
//!
//! Views are clustered by camera center and a reference view is chosen per
//! cluster. The coarse stage inverts every rendered view with DDIM and
//! resamples it while propagating reference-view attention features, then
//! fits the Gaussians to the inpainted images and their depth. The fine
//! stage refines the scene with score distillation conditioned on edge and
//! depth maps warped from each cluster's reference view.
//!
//! Learned components (noise predictor, depth estimator) sit behind the
//! [`diffusion::ScoreModel`] and [`warp::DepthEstimator`] traits and ship
//! with analytic implementations.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scene_io;
pub mod synthetic;
pub mod view_select;
pub mod warp;

pub use error::{Error, Result};
pub use raster::Raster;

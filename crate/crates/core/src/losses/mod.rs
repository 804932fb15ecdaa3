//! Photometric, depth and score-distillation objectives.

mod photometric;
mod sds;
mod ssim;

pub use photometric::{
    depth_loss, dssim_loss, l1_loss, l1_with_grad, rgb_loss, total_loss, LossComponents,
    LossWeights,
};
pub use sds::{sds_grad, sds_sample, tg_sds_grad, SdsSample, SdsSettings};
pub use ssim::{ssim, ssim_with_grad, C1, C2, WINDOW, WINDOW_SIGMA};

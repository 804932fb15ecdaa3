//! Diffusion time machinery, the score-model interface with its built-in
//! models, and attention feature propagation across views.

mod attention;
mod ddim;
mod model;
mod multiview;
mod schedule;
mod tiny_unet;

pub use attention::{afp_blend, self_attention, AfpContext};
pub use ddim::{
    ddim_invert, ddim_sample, ddim_sample_capturing, AfpSchedule, FeatureCapture, LatentImage,
};
pub use model::{guided_noise, BlockFeatures, Condition, PointTarget, PromptHandle, ScoreModel};
pub use multiview::{inpaint_condition, inpaint_multiview, inpaint_view, InpaintInput};
pub use schedule::{NoiseSchedule, BETA_END, BETA_START};
pub use tiny_unet::{
    text_embedding, TinyAttentionUnet, TinyUnetWeights, FEATURES, HIDDEN, POOL, TEXT_DIM,
    WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

//! Posed multi-view scenes, prompts, configuration and their on-disk formats.

mod camera;
mod colmap;
mod config;
mod pfm;
mod scene;

pub use camera::{camera_center, CameraIntrinsics, CameraPose};
pub use colmap::{parse_cameras, parse_colmap_text, parse_images};
pub use config::{
    DepthConditionSource, DepthEstimatorKind, PipelineConfig, ScoreModelKind, SdsWeighting,
};
pub use pfm::{decode_pfm, encode_pfm, read_depth_pfm, write_depth_pfm};
pub use scene::{
    load_scene, read_png_mask, read_png_rgb, save_scene, write_png, InpaintPrompts, InpaintTask,
    SceneBundle, View, MASK_THRESHOLD,
};

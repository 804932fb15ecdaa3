//! Stage orchestration: cloud initialization, the coarse and fine stages,
//! and their on-disk artifacts.

mod artifacts;
mod setup;
mod stages;
mod targets;

pub use artifacts::{
    ensure_dir, write_cloud, write_renders, write_targets, write_text, CLOUD_SIDECAR, CLOUD_TEXT,
    TARGETS_FILE,
};
pub use setup::{
    build_estimator, build_schedule, build_score_model, cloud_from_depth, cloud_from_points,
    cluster_scene, initial_cloud, load_points, ColoredPoint, INIT_OPACITY, INIT_STRIDE,
};
pub use stages::{
    depth_term, loss_weights, run_coarse, run_fine, run_pipeline, CoarseOutput, FineOutput,
    StageReport, FINE_SEED_OFFSET, PRUNE_EVERY, PRUNE_OPACITY,
};
pub use targets::CoarseTargets;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::render::{rasterize, GaussianCloud};
use crate::scene_io::{write_depth_pfm, write_png, SceneBundle};

use super::CoarseTargets;

pub const CLOUD_TEXT: &str = "cloud.txt";
pub const CLOUD_SIDECAR: &str = "cloud.bin";
pub const TARGETS_FILE: &str = "targets.bin";

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `renders/{id}.png` and `depths/{id}.pfm` for every view.
pub fn write_renders(out: &Path, scene: &SceneBundle, cloud: &GaussianCloud) -> Result<Vec<PathBuf>> {
    ensure_dir(&out.join("renders"))?;
    ensure_dir(&out.join("depths"))?;
    let mut written = Vec::new();
    for v in &scene.views {
        let r = rasterize(cloud, &v.pose, &v.intrinsics)?;
        let png = out.join("renders").join(format!("{}.png", v.id));
        write_png(&png, &r.color.map(|c| c.clamp(0.0, 1.0)))?;
        let pfm = out.join("depths").join(format!("{}.pfm", v.id));
        write_depth_pfm(&pfm, &r.depth)?;
        written.push(png);
        written.push(pfm);
    }
    Ok(written)
}

pub fn write_cloud(out: &Path, cloud: &GaussianCloud) -> Result<Vec<PathBuf>> {
    let (txt, bin) = (out.join(CLOUD_TEXT), out.join(CLOUD_SIDECAR));
    cloud.save(&txt, &bin)?;
    Ok(vec![txt, bin])
}

/// Writes `inpainted/{id}.png` and the full-precision target file.
pub fn write_targets(out: &Path, targets: &CoarseTargets) -> Result<Vec<PathBuf>> {
    ensure_dir(&out.join("inpainted"))?;
    let mut written = Vec::new();
    for (id, img) in targets.ids.iter().zip(&targets.images) {
        let p = out.join("inpainted").join(format!("{id}.png"));
        write_png(&p, img)?;
        written.push(p);
    }
    let p = out.join(TARGETS_FILE);
    targets.save(&p)?;
    written.push(p);
    Ok(written)
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

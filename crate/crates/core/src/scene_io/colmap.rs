//! Reader for COLMAP text models (`cameras.txt` + `images.txt`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{normalize_quat, quat_norm, quat_to_matrix};

use super::camera::{CameraIntrinsics, CameraPose};

const QUAT_NORM_TOL: f64 = 1e-3;

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn parse_num<T: std::str::FromStr>(tok: &str, file: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(file, line, format!("bad {what} `{tok}`")))
}

/// Parses `cameras.txt` into intrinsics keyed by camera id.
pub fn parse_cameras(text: &str, file: &str) -> Result<HashMap<u32, CameraIntrinsics>> {
    let mut cams = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(Error::parse(file, line_no, "camera line needs id, model, width, height"));
        }
        let id: u32 = parse_num(toks[0], file, line_no, "camera id")?;
        let model = toks[1];
        let width: usize = parse_num(toks[2], file, line_no, "width")?;
        let height: usize = parse_num(toks[3], file, line_no, "height")?;
        let params = toks[4..]
            .iter()
            .map(|t| parse_num::<f64>(t, file, line_no, "parameter"))
            .collect::<Result<Vec<_>>>()?;
        let (fx, fy, cx, cy) = match (model, params.len()) {
            ("PINHOLE", 4) => (params[0], params[1], params[2], params[3]),
            ("SIMPLE_PINHOLE", 3) => (params[0], params[0], params[1], params[2]),
            ("PINHOLE", n) | ("SIMPLE_PINHOLE", n) => {
                return Err(Error::parse(
                    file,
                    line_no,
                    format!("{model} expects {} parameters, got {n}", if model == "PINHOLE" { 4 } else { 3 }),
                ))
            }
            (other, _) => {
                return Err(Error::Unsupported(format!(
                    "{file}:{line_no}: camera model {other} (only PINHOLE and SIMPLE_PINHOLE)"
                )))
            }
        };
        let intr = CameraIntrinsics::new(width, height, fx, fy, cx, cy)
            .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
        cams.insert(id, intr);
    }
    Ok(cams)
}

/// One registered image: `(image id, camera id, pose)`.
pub fn parse_images(text: &str, file: &str) -> Result<Vec<(u32, u32, CameraPose)>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim()))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (line_no, line) = lines[i];
        if line.is_empty() {
            i += 1;
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 10 {
            return Err(Error::parse(
                file,
                line_no,
                "image line needs IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME",
            ));
        }
        let id: u32 = parse_num(toks[0], file, line_no, "image id")?;
        let mut q = [0.0; 4];
        for (k, slot) in q.iter_mut().enumerate() {
            *slot = parse_num(toks[1 + k], file, line_no, "quaternion component")?;
        }
        let mut t = [0.0; 3];
        for (k, slot) in t.iter_mut().enumerate() {
            *slot = parse_num(toks[5 + k], file, line_no, "translation component")?;
        }
        let cam: u32 = parse_num(toks[8], file, line_no, "camera id")?;
        let norm = quat_norm(q);
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::parse(
                file,
                line_no,
                format!("quaternion norm {norm} is not 1"),
            ));
        }
        let pose = CameraPose::new(
            quat_to_matrix(normalize_quat(q)),
            Vector3::new(t[0], t[1], t[2]),
        )
        .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
        out.push((id, cam, pose));
        // the following line lists 2D observations and may be empty
        i += 2;
    }
    Ok(out)
}

/// Reads a COLMAP text model and returns `(image id, intrinsics, pose)`
/// sorted by image id.
pub fn parse_colmap_text(
    cameras_file: &Path,
    images_file: &Path,
) -> Result<Vec<(u32, CameraIntrinsics, CameraPose)>> {
    let cam_text = fs::read_to_string(cameras_file).map_err(|e| Error::io(cameras_file, e))?;
    let img_text = fs::read_to_string(images_file).map_err(|e| Error::io(images_file, e))?;
    let cams = parse_cameras(&cam_text, &file_label(cameras_file))?;
    let images = parse_images(&img_text, &file_label(images_file))?;
    let mut out = Vec::with_capacity(images.len());
    for (id, cam, pose) in images {
        let intr = *cams.get(&cam).ok_or_else(|| Error::View {
            view: id,
            message: format!("references unknown camera {cam}"),
        })?;
        out.push((id, intr, pose));
    }
    out.sort_by_key(|(id, _, _)| *id);
    Ok(out)
}

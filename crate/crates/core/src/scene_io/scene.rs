use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::raster::{is_binary, Raster};
use crate::view_select::Clustering;

use super::camera::{CameraIntrinsics, CameraPose};
use super::colmap::parse_colmap_text;
use super::pfm::{read_depth_pfm, write_depth_pfm};

/// Mask pixels at or above this 8-bit value are inside the inpainting region.
pub const MASK_THRESHOLD: u8 = 128;

/// One posed input view.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    /// RGB in [0, 1].
    pub image: Raster,
    /// 1 marks the region to inpaint.
    pub mask: Raster,
    pub depth: Option<Raster>,
}

impl View {
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::View {
            view: self.id,
            message,
        };
        self.intrinsics.validate().map_err(|e| err(e.to_string()))?;
        self.pose.validate().map_err(|e| err(e.to_string()))?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let check = |r: &Raster, what: &str, channels: usize| -> Result<()> {
            if r.width() != w || r.height() != h || r.channels() != channels {
                Err(err(format!(
                    "dimension mismatch: {what} is {}x{}x{}, camera is {w}x{h}",
                    r.width(),
                    r.height(),
                    r.channels()
                )))
            } else {
                Ok(())
            }
        };
        check(&self.image, "image", 3)?;
        check(&self.mask, "mask", 1)?;
        if !is_binary(&self.mask) {
            return Err(err("mask values must be 0 or 1".into()));
        }
        if let Some(d) = &self.depth {
            check(d, "depth", 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InpaintTask {
    #[default]
    Removal,
    Retexture,
    Replace,
}

/// Text prompts. Prompts are opaque to the pipeline and only routed to the
/// score model; the mask prompt is informational since masks are inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InpaintPrompts {
    pub task: InpaintTask,
    pub positive: String,
    pub negative: String,
    pub mask_prompt: String,
}

impl InpaintPrompts {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.task, InpaintTask::Retexture | InpaintTask::Replace)
            && self.positive.trim().is_empty()
        {
            return Err(Error::Invalid(
                "a positive prompt is required for re-texturing and replacement".into(),
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("prompts.txt", idx + 1, "expected key = value"))?;
            let v = v.trim().to_string();
            match k.trim() {
                "task" => {
                    p.task = match v.as_str() {
                        "removal" => InpaintTask::Removal,
                        "retexture" => InpaintTask::Retexture,
                        "replace" => InpaintTask::Replace,
                        _ => {
                            return Err(Error::parse(
                                "prompts.txt",
                                idx + 1,
                                format!("unknown task `{v}`"),
                            ))
                        }
                    }
                }
                "positive" => p.positive = v,
                "negative" => p.negative = v,
                "mask" => p.mask_prompt = v,
                other => {
                    return Err(Error::parse(
                        "prompts.txt",
                        idx + 1,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let task = match self.task {
            InpaintTask::Removal => "removal",
            InpaintTask::Retexture => "retexture",
            InpaintTask::Replace => "replace",
        };
        format!(
            "task = {task}\npositive = {}\nnegative = {}\nmask = {}\n",
            self.positive, self.negative, self.mask_prompt
        )
    }
}

/// All views of a scene plus prompts and, once computed, the clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub views: Vec<View>,
    pub prompts: InpaintPrompts,
    pub clustering: Option<Clustering>,
}

impl SceneBundle {
    /// Validates every view, requires a uniform resolution, and sorts by id.
    pub fn new(mut views: Vec<View>, prompts: InpaintPrompts) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Invalid("scene has no views".into()));
        }
        views.sort_by_key(|v| v.id);
        for pair in views.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::View {
                    view: pair[0].id,
                    message: "duplicate view id".into(),
                });
            }
        }
        for v in &views {
            v.validate()?;
        }
        let (w, h) = (views[0].intrinsics.width, views[0].intrinsics.height);
        if let Some(v) = views
            .iter()
            .find(|v| v.intrinsics.width != w || v.intrinsics.height != h)
        {
            return Err(Error::View {
                view: v.id,
                message: format!(
                    "resolution {}x{} differs from scene resolution {w}x{h}",
                    v.intrinsics.width, v.intrinsics.height
                ),
            });
        }
        prompts.validate()?;
        Ok(Self {
            views,
            prompts,
            clustering: None,
        })
    }

    pub fn view(&self, id: u32) -> Option<&View> {
        self.views
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &self.views[i])
    }

    pub fn view_index(&self, id: u32) -> Option<usize> {
        self.views.binary_search_by_key(&id, |v| v.id).ok()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.views.iter().map(|v| v.id).collect()
    }
}

pub fn read_png_rgb(path: &Path) -> Result<Raster> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.into(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Raster::from_vec(w as usize, h as usize, 3, data)
}

/// Reads an 8-bit mask and binarizes it at [`MASK_THRESHOLD`].
pub fn read_png_mask(path: &Path) -> Result<Raster> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.into(),
            message: e.to_string(),
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|b| if b >= MASK_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    Raster::from_vec(w as usize, h as usize, 1, data)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB raster (or a single-channel raster as gray) as 8-bit PNG.
pub fn write_png(path: &Path, raster: &Raster) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let res = match raster.channels() {
        3 => {
            let buf: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
                let p = raster.pixel(x as usize, y as usize);
                Rgb([to_byte(p[0]), to_byte(p[1]), to_byte(p[2])])
            });
            buf.save(path)
        }
        1 => {
            let buf: GrayImage = ImageBuffer::from_fn(w, h, |x, y| {
                Luma([to_byte(raster.get(x as usize, y as usize, 0))])
            });
            buf.save(path)
        }
        c => {
            return Err(Error::Invalid(format!(
                "cannot write {c}-channel raster as PNG"
            )))
        }
    };
    res.map_err(|e| Error::Image {
        path: path.into(),
        message: e.to_string(),
    })
}

fn parse_native_cameras(text: &str) -> Result<Vec<(u32, CameraIntrinsics, CameraPose)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 19 {
            return Err(Error::parse(
                "cameras.txt",
                line_no,
                format!("expected 19 fields, found {}", toks.len()),
            ));
        }
        let bad = |what: &str, tok: &str| {
            Error::parse("cameras.txt", line_no, format!("bad {what} `{tok}`"))
        };
        let id: u32 = toks[0].parse().map_err(|_| bad("view id", toks[0]))?;
        let width: usize = toks[1].parse().map_err(|_| bad("width", toks[1]))?;
        let height: usize = toks[2].parse().map_err(|_| bad("height", toks[2]))?;
        let nums = toks[3..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| bad("number", t)))
            .collect::<Result<Vec<_>>>()?;
        let view_err = |e: Error| Error::View {
            view: id,
            message: e.to_string(),
        };
        let intr = CameraIntrinsics::new(width, height, nums[0], nums[1], nums[2], nums[3])
            .map_err(view_err)?;
        let rotation = Matrix3::from_row_slice(&nums[4..13]);
        let translation = Vector3::new(nums[13], nums[14], nums[15]);
        let pose = CameraPose::new(rotation, translation).map_err(view_err)?;
        out.push((id, intr, pose));
    }
    Ok(out)
}

fn format_native_cameras(views: &[View]) -> String {
    let mut s = String::from("# id width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n");
    for v in views {
        let k = &v.intrinsics;
        let _ = write!(
            s,
            "{} {} {} {:?} {:?} {:?} {:?}",
            v.id, k.width, k.height, k.fx, k.fy, k.cx, k.cy
        );
        for r in 0..3 {
            for c in 0..3 {
                let _ = write!(s, " {:?}", v.pose.rotation[(r, c)]);
            }
        }
        for t in v.pose.translation.iter() {
            let _ = write!(s, " {t:?}");
        }
        s.push('\n');
    }
    s
}

/// Loads a scene directory: `cameras.txt` (or `colmap/cameras.txt` +
/// `colmap/images.txt`), `images/{id}.png`, `masks/{id}.png`, optional
/// `depth/{id}.pfm` and `prompts.txt`.
pub fn load_scene(dir: &Path) -> Result<SceneBundle> {
    let native = dir.join("cameras.txt");
    let cameras = if native.exists() {
        let text = fs::read_to_string(&native).map_err(|e| Error::io(&native, e))?;
        parse_native_cameras(&text)?
    } else {
        let colmap = dir.join("colmap");
        let (c, i) = (colmap.join("cameras.txt"), colmap.join("images.txt"));
        if !c.exists() || !i.exists() {
            return Err(Error::Invalid(format!(
                "{}: no cameras.txt or colmap/ text model",
                dir.display()
            )));
        }
        parse_colmap_text(&c, &i)?
    };
    let mut views = Vec::with_capacity(cameras.len());
    for (id, intrinsics, pose) in cameras {
        let with_view = |e: Error| match e {
            Error::View { .. } => e,
            other => Error::View {
                view: id,
                message: other.to_string(),
            },
        };
        let image_path = dir.join("images").join(format!("{id}.png"));
        let mask_path = dir.join("masks").join(format!("{id}.png"));
        if !image_path.exists() {
            return Err(Error::View {
                view: id,
                message: format!("missing {}", image_path.display()),
            });
        }
        if !mask_path.exists() {
            return Err(Error::View {
                view: id,
                message: format!("missing {}", mask_path.display()),
            });
        }
        let image = read_png_rgb(&image_path).map_err(with_view)?;
        let mask = read_png_mask(&mask_path).map_err(with_view)?;
        let depth_path = dir.join("depth").join(format!("{id}.pfm"));
        let depth = if depth_path.exists() {
            Some(read_depth_pfm(&depth_path).map_err(with_view)?)
        } else {
            None
        };
        views.push(View {
            id,
            intrinsics,
            pose,
            image,
            mask,
            depth,
        });
    }
    let prompts_path = dir.join("prompts.txt");
    let prompts = if prompts_path.exists() {
        let text = fs::read_to_string(&prompts_path).map_err(|e| Error::io(&prompts_path, e))?;
        InpaintPrompts::parse(&text)?
    } else {
        InpaintPrompts::default()
    };
    SceneBundle::new(views, prompts)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a scene in the native layout read by [`load_scene`].
pub fn save_scene(scene: &SceneBundle, dir: &Path) -> Result<()> {
    create_dir(&dir.join("images"))?;
    create_dir(&dir.join("masks"))?;
    let cams = dir.join("cameras.txt");
    fs::write(&cams, format_native_cameras(&scene.views)).map_err(|e| Error::io(&cams, e))?;
    for v in &scene.views {
        write_png(&dir.join("images").join(format!("{}.png", v.id)), &v.image)?;
        write_png(&dir.join("masks").join(format!("{}.png", v.id)), &v.mask)?;
        if let Some(d) = &v.depth {
            create_dir(&dir.join("depth"))?;
            write_depth_pfm(&dir.join("depth").join(format!("{}.pfm", v.id)), d)?;
        }
    }
    let prompts = dir.join("prompts.txt");
    fs::write(&prompts, scene.prompts.to_text()).map_err(|e| Error::io(&prompts, e))?;
    Ok(())
}

//! Flat `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreModelKind {
    PointTarget,
    TinyAttentionUnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthEstimatorKind {
    RenderedPassthrough,
    ConstantPlane,
}

/// Where the depth condition for a warped view comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthConditionSource {
    /// Run the depth estimator on the warped image.
    Estimator,
    /// Use the target-camera depth produced by the warp itself.
    Warped,
}

/// Timestep weighting w(t) for score distillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdsWeighting {
    OneMinusAlphaBar,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k_clusters: usize,
    pub lambda_a: f64,
    pub lambda_dssim: f64,
    pub lambda_rgb: f64,
    pub lambda_depth: f64,
    pub lambda_tgsds: f64,
    pub guidance_scale: f64,
    pub cond_scale_depth: f64,
    pub cond_scale_texture: f64,
    pub ddim_steps: usize,
    pub diffusion_timesteps: usize,
    pub t_min_frac: f64,
    pub t_max_frac: f64,
    pub seed: u64,
    pub coarse_iters: usize,
    pub fine_iters: usize,
    pub score_model: ScoreModelKind,
    pub point_target_image: Option<String>,
    pub point_target_fill: [f64; 3],
    pub tiny_unet_weights: Option<String>,
    pub depth_estimator: DepthEstimatorKind,
    pub depth_condition_source: DepthConditionSource,
    pub sds_weighting: SdsWeighting,
    pub lr_position: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub prune_low_opacity: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_clusters: 3,
            lambda_a: 0.6,
            lambda_dssim: 0.2,
            lambda_rgb: 1.0,
            lambda_depth: 0.05,
            lambda_tgsds: 0.01,
            guidance_scale: 7.5,
            cond_scale_depth: 1.0,
            cond_scale_texture: 0.8,
            ddim_steps: 50,
            diffusion_timesteps: 1000,
            t_min_frac: 0.02,
            t_max_frac: 0.98,
            seed: 0,
            coarse_iters: 2000,
            fine_iters: 1000,
            score_model: ScoreModelKind::PointTarget,
            point_target_image: None,
            point_target_fill: [0.5, 0.5, 0.5],
            tiny_unet_weights: None,
            depth_estimator: DepthEstimatorKind::RenderedPassthrough,
            depth_condition_source: DepthConditionSource::Estimator,
            sds_weighting: SdsWeighting::OneMinusAlphaBar,
            lr_position: 1.6e-4,
            lr_rotation: 1e-3,
            lr_scale: 5e-3,
            lr_opacity: 5e-2,
            lr_color: 2.5e-3,
            prune_low_opacity: false,
        }
    }
}

fn invalid(key: &str, value: &str, why: &str) -> Error {
    Error::Invalid(format!("config key `{key}` = `{value}`: {why}"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| invalid(key, value, "not a number"))?;
    if !v.is_finite() {
        return Err(invalid(key, value, "must be finite"));
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| invalid(key, value, "not a non-negative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn opt_string(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl PipelineConfig {
    /// Parses a config file body on top of the defaults. Unknown keys and
    /// out-of-range values are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", idx + 1, "expected key = value"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k_clusters" => self.k_clusters = parse_usize(key, value)?,
            "lambda_a" => self.lambda_a = parse_f64(key, value)?,
            "lambda_dssim" => self.lambda_dssim = parse_f64(key, value)?,
            "lambda_rgb" => self.lambda_rgb = parse_f64(key, value)?,
            "lambda_depth" => self.lambda_depth = parse_f64(key, value)?,
            "lambda_tgsds" => self.lambda_tgsds = parse_f64(key, value)?,
            "guidance_scale" => self.guidance_scale = parse_f64(key, value)?,
            "cond_scale_depth" => self.cond_scale_depth = parse_f64(key, value)?,
            "cond_scale_texture" => self.cond_scale_texture = parse_f64(key, value)?,
            "ddim_steps" => self.ddim_steps = parse_usize(key, value)?,
            "diffusion_timesteps" => self.diffusion_timesteps = parse_usize(key, value)?,
            "t_min_frac" => self.t_min_frac = parse_f64(key, value)?,
            "t_max_frac" => self.t_max_frac = parse_f64(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| invalid(key, value, "not an unsigned integer"))?
            }
            "coarse_iters" => self.coarse_iters = parse_usize(key, value)?,
            "fine_iters" => self.fine_iters = parse_usize(key, value)?,
            "score_model" => {
                self.score_model = match value {
                    "point_target" => ScoreModelKind::PointTarget,
                    "tiny_attention_unet" => ScoreModelKind::TinyAttentionUnet,
                    _ => return Err(invalid(key, value, "expected point_target or tiny_attention_unet")),
                }
            }
            "point_target_image" => self.point_target_image = opt_string(value),
            "point_target_fill" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(invalid(key, value, "expected r,g,b"));
                }
                for (slot, p) in self.point_target_fill.iter_mut().zip(parts) {
                    *slot = parse_f64(key, p)?;
                }
            }
            "tiny_unet_weights" => self.tiny_unet_weights = opt_string(value),
            "depth_estimator" => {
                self.depth_estimator = match value {
                    "rendered_passthrough" => DepthEstimatorKind::RenderedPassthrough,
                    "constant_plane" => DepthEstimatorKind::ConstantPlane,
                    _ => return Err(invalid(key, value, "expected rendered_passthrough or constant_plane")),
                }
            }
            "depth_condition_source" => {
                self.depth_condition_source = match value {
                    "estimator" => DepthConditionSource::Estimator,
                    "warped" => DepthConditionSource::Warped,
                    _ => return Err(invalid(key, value, "expected estimator or warped")),
                }
            }
            "sds_weighting" => {
                self.sds_weighting = match value {
                    "one_minus_alpha_bar" => SdsWeighting::OneMinusAlphaBar,
                    "constant" => SdsWeighting::Constant,
                    _ => return Err(invalid(key, value, "expected one_minus_alpha_bar or constant")),
                }
            }
            "lr_position" => self.lr_position = parse_f64(key, value)?,
            "lr_rotation" => self.lr_rotation = parse_f64(key, value)?,
            "lr_scale" => self.lr_scale = parse_f64(key, value)?,
            "lr_opacity" => self.lr_opacity = parse_f64(key, value)?,
            "lr_color" => self.lr_color = parse_f64(key, value)?,
            "prune_low_opacity" => self.prune_low_opacity = parse_bool(key, value)?,
            _ => return Err(Error::Invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, v: f64, lo: f64, hi: f64| -> Result<()> {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} = {v} outside [{lo}, {hi}]")))
            }
        };
        if self.k_clusters == 0 {
            return Err(Error::Invalid("k_clusters must be at least 1".into()));
        }
        range("lambda_a", self.lambda_a, 0.0, 1.0)?;
        range("lambda_dssim", self.lambda_dssim, 0.0, 1.0)?;
        for (name, v) in [
            ("lambda_rgb", self.lambda_rgb),
            ("lambda_depth", self.lambda_depth),
            ("lambda_tgsds", self.lambda_tgsds),
            ("lr_position", self.lr_position),
            ("lr_rotation", self.lr_rotation),
            ("lr_scale", self.lr_scale),
            ("lr_opacity", self.lr_opacity),
            ("lr_color", self.lr_color),
        ] {
            range(name, v, 0.0, f64::MAX)?;
        }
        range("guidance_scale", self.guidance_scale, 1.0, f64::MAX)?;
        range("cond_scale_depth", self.cond_scale_depth, 0.0, 2.0)?;
        range("cond_scale_texture", self.cond_scale_texture, 0.0, 2.0)?;
        if self.ddim_steps == 0 {
            return Err(Error::Invalid("ddim_steps must be at least 1".into()));
        }
        if self.diffusion_timesteps < self.ddim_steps {
            return Err(Error::Invalid(
                "diffusion_timesteps must be at least ddim_steps".into(),
            ));
        }
        range("t_min_frac", self.t_min_frac, 0.0, 1.0)?;
        range("t_max_frac", self.t_max_frac, 0.0, 1.0)?;
        if self.t_min_frac >= self.t_max_frac {
            return Err(Error::Invalid(format!(
                "t_min_frac ({}) must be below t_max_frac ({})",
                self.t_min_frac, self.t_max_frac
            )));
        }
        for v in self.point_target_fill {
            range("point_target_fill", v, 0.0, 1.0)?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("k_clusters", self.k_clusters.to_string());
        kv("lambda_a", format!("{:?}", self.lambda_a));
        kv("lambda_dssim", format!("{:?}", self.lambda_dssim));
        kv("lambda_rgb", format!("{:?}", self.lambda_rgb));
        kv("lambda_depth", format!("{:?}", self.lambda_depth));
        kv("lambda_tgsds", format!("{:?}", self.lambda_tgsds));
        kv("guidance_scale", format!("{:?}", self.guidance_scale));
        kv("cond_scale_depth", format!("{:?}", self.cond_scale_depth));
        kv("cond_scale_texture", format!("{:?}", self.cond_scale_texture));
        kv("ddim_steps", self.ddim_steps.to_string());
        kv("diffusion_timesteps", self.diffusion_timesteps.to_string());
        kv("t_min_frac", format!("{:?}", self.t_min_frac));
        kv("t_max_frac", format!("{:?}", self.t_max_frac));
        kv("seed", self.seed.to_string());
        kv("coarse_iters", self.coarse_iters.to_string());
        kv("fine_iters", self.fine_iters.to_string());
        kv(
            "score_model",
            match self.score_model {
                ScoreModelKind::PointTarget => "point_target",
                ScoreModelKind::TinyAttentionUnet => "tiny_attention_unet",
            }
            .into(),
        );
        kv(
            "point_target_image",
            self.point_target_image.clone().unwrap_or_default(),
        );
        let [r, g, b] = self.point_target_fill;
        kv("point_target_fill", format!("{r:?},{g:?},{b:?}"));
        kv(
            "tiny_unet_weights",
            self.tiny_unet_weights.clone().unwrap_or_default(),
        );
        kv(
            "depth_estimator",
            match self.depth_estimator {
                DepthEstimatorKind::RenderedPassthrough => "rendered_passthrough",
                DepthEstimatorKind::ConstantPlane => "constant_plane",
            }
            .into(),
        );
        kv(
            "depth_condition_source",
            match self.depth_condition_source {
                DepthConditionSource::Estimator => "estimator",
                DepthConditionSource::Warped => "warped",
            }
            .into(),
        );
        kv(
            "sds_weighting",
            match self.sds_weighting {
                SdsWeighting::OneMinusAlphaBar => "one_minus_alpha_bar",
                SdsWeighting::Constant => "constant",
            }
            .into(),
        );
        kv("lr_position", format!("{:?}", self.lr_position));
        kv("lr_rotation", format!("{:?}", self.lr_rotation));
        kv("lr_scale", format!("{:?}", self.lr_scale));
        kv("lr_opacity", format!("{:?}", self.lr_opacity));
        kv("lr_color", format!("{:?}", self.lr_color));
        kv("prune_low_opacity", self.prune_low_opacity.to_string());
        s
    }
}

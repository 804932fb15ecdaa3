//! Command-line front end. Every subcommand writes under `--out` and
//! finishes with a `run.json` manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::diffusion::ScoreModel;
use crate::error::{Error, Result};
use crate::metrics::{eval_metrics, EvalPair};
use crate::pipeline::{
    build_estimator, build_schedule, build_score_model, cluster_scene, ensure_dir, initial_cloud,
    load_points, run_coarse, run_fine, write_cloud, write_renders, write_targets, write_text,
    CoarseTargets, CLOUD_SIDECAR, TARGETS_FILE,
};
use crate::render::GaussianCloud;
use crate::scene_io::{load_scene, read_png_rgb, write_depth_pfm, write_png, PipelineConfig, SceneBundle};
use crate::warp::build_conditions;

#[derive(Debug, Parser)]
#[command(name = "gsinpaint", about = "Multi-view consistent inpainting of Gaussian splat scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Key/value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster camera centers and pick reference views.
    Cluster {
        #[command(flatten)]
        common: Common,
    },
    /// Warp one view's image, edges and depth into another.
    Warp {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ref")]
        reference: u32,
        #[arg(long)]
        target: u32,
        /// Cloud sidecar to render depth from instead of the scene depth maps.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Inpaint every view and fit the cloud to the results.
    Coarse {
        #[command(flatten)]
        common: Common,
        /// Initial cloud sidecar; otherwise seeded from points.txt or view depth.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Refine a coarse result with the guided score term.
    Fine {
        #[command(flatten)]
        common: Common,
        /// Output directory of a previous `coarse` run.
        #[arg(long)]
        from: PathBuf,
    },
    /// Render every view of a stored cloud.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: PathBuf,
    },
    /// Compare rendered images with references under the scene masks.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        renders: PathBuf,
        /// Defaults to the scene's own images.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cluster { .. } => "cluster",
            Command::Warp { .. } => "warp",
            Command::Coarse { .. } => "coarse",
            Command::Fine { .. } => "fine",
            Command::Render { .. } => "render",
            Command::Eval { .. } => "eval",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Cluster { common }
            | Command::Warp { common, .. }
            | Command::Coarse { common, .. }
            | Command::Fine { common, .. }
            | Command::Render { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns 0 on
/// success, 1 for usage or validation errors and 2 for numeric failures.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}

struct Context {
    config: PipelineConfig,
    config_dir: PathBuf,
    scene: SceneBundle,
    out: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Context {
    fn load(common: &Common) -> Result<Self> {
        let (mut config, config_dir) = match &common.config {
            Some(p) => (
                PipelineConfig::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (PipelineConfig::default(), PathBuf::from(".")),
        };
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        config.validate()?;
        let scene = load_scene(&common.scene)?;
        ensure_dir(&common.out)?;
        Ok(Self {
            config,
            config_dir,
            scene,
            out: common.out.clone(),
            artifacts: Vec::new(),
        })
    }

    fn model(&self) -> Result<Box<dyn ScoreModel>> {
        let first = &self.scene.views[0].intrinsics;
        let schedule = build_schedule(&self.config)?;
        build_score_model(&self.config, &schedule, first.width, first.height, &self.config_dir)
    }

    fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.artifacts.extend(paths);
    }

    /// Writes `run.json`: subcommand, seed, config hash and the sorted
    /// artifact list relative to the output directory.
    fn finish(mut self, subcommand: &str) -> Result<()> {
        let mut rel: Vec<String> = self
            .artifacts
            .drain(..)
            .map(|p| {
                p.strip_prefix(&self.out)
                    .unwrap_or(&p)
                    .to_string_lossy()
                    .replace('\\', "/")
            })
            .collect();
        rel.sort();
        rel.dedup();
        let hash: String = Sha256::digest(self.config.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let manifest = serde_json::json!({
            "subcommand": subcommand,
            "seed": self.config.seed,
            "config_sha256": hash,
            "artifacts": rel,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Invalid(format!("manifest: {e}")))?;
        write_text(&self.out.join("run.json"), &(text + "\n"))?;
        Ok(())
    }
}

fn load_cloud_from(dir: &Path) -> Result<GaussianCloud> {
    GaussianCloud::load_sidecar(&dir.join(CLOUD_SIDECAR))
}

fn execute(command: &Command) -> Result<()> {
    let mut ctx = Context::load(command.common())?;
    match command {
        Command::Cluster { .. } => {
            let clustering = cluster_scene(&ctx.scene, &ctx.config)?;
            let path = write_text(&ctx.out.join("clusters.txt"), &clustering.report())?;
            print!("{}", clustering.report());
            ctx.record([path]);
        }
        Command::Warp {
            reference,
            target,
            cloud,
            ..
        } => {
            let paths = warp(&ctx, *reference, *target, cloud.as_deref())?;
            ctx.record(paths);
        }
        Command::Coarse { cloud, .. } => {
            let initial = match cloud {
                Some(p) => GaussianCloud::load_sidecar(p)?,
                None => {
                    let points = load_points(&command.common().scene)?;
                    initial_cloud(&ctx.scene, points.as_deref())?
                }
            };
            let model = ctx.model()?;
            let result = run_coarse(&ctx.scene, initial, model.as_ref(), &ctx.config)?;
            let mut paths = write_targets(&ctx.out, &result.targets)?;
            paths.extend(write_cloud(&ctx.out, &result.cloud)?);
            paths.extend(write_renders(&ctx.out, &ctx.scene, &result.cloud)?);
            paths.push(write_text(&ctx.out.join("coarse_log.txt"), &result.report.log_text())?);
            println!("coarse: {} iterations, final loss {:.6}", result.report.iterations, result.report.final_total);
            ctx.record(paths);
        }
        Command::Fine { from, .. } => {
            let cloud = load_cloud_from(from)?;
            let targets = CoarseTargets::load(&from.join(TARGETS_FILE))?;
            let model = ctx.model()?;
            let result = run_fine(&ctx.scene, cloud, &targets, model.as_ref(), &ctx.config)?;
            let mut paths = write_cloud(&ctx.out, &result.cloud)?;
            paths.extend(write_renders(&ctx.out, &ctx.scene, &result.cloud)?);
            paths.push(write_text(&ctx.out.join("fine_log.txt"), &result.report.log_text())?);
            println!("fine: {} iterations, final loss {:.6}", result.report.iterations, result.report.final_total);
            ctx.record(paths);
        }
        Command::Render { from, .. } => {
            let cloud = load_cloud_from(from)?;
            let paths = write_renders(&ctx.out, &ctx.scene, &cloud)?;
            ctx.record(paths);
        }
        Command::Eval {
            renders, reference, ..
        } => {
            let reference_dir = reference
                .clone()
                .unwrap_or_else(|| command.common().scene.join("images"));
            let mut rendered = Vec::new();
            let mut refs = Vec::new();
            for v in &ctx.scene.views {
                rendered.push(read_png_rgb(&renders.join(format!("{}.png", v.id)))?);
                refs.push(read_png_rgb(&reference_dir.join(format!("{}.png", v.id)))?);
            }
            let pairs: Vec<EvalPair> = ctx
                .scene
                .views
                .iter()
                .enumerate()
                .map(|(i, v)| EvalPair {
                    id: v.id,
                    rendered: &rendered[i],
                    reference: &refs[i],
                    mask: &v.mask,
                })
                .collect();
            let report = eval_metrics(&pairs)?;
            let m = report.mean();
            println!(
                "mean psnr {:.6} ssim {:.6} masked_psnr {:.6} masked_ssim {:.6}",
                m.psnr, m.ssim, m.masked_psnr, m.masked_ssim
            );
            let path = write_text(&ctx.out.join("metrics.txt"), &report.to_text())?;
            ctx.record([path]);
        }
    }
    ctx.finish(command.name())
}

fn warp(ctx: &Context, reference: u32, target: u32, cloud: Option<&Path>) -> Result<Vec<PathBuf>> {
    let scene = &ctx.scene;
    let find = |id: u32| {
        scene.view(id).ok_or_else(|| Error::View {
            view: id,
            message: "not in scene".into(),
        })
    };
    let (r, t) = (find(reference)?, find(target)?);
    let depth_of = |v: &crate::scene_io::View| -> Result<crate::raster::Raster> {
        match cloud {
            Some(p) => {
                let c = GaussianCloud::load_sidecar(p)?;
                Ok(crate::render::rasterize(&c, &v.pose, &v.intrinsics)?.depth)
            }
            None => v.depth.clone().ok_or_else(|| Error::View {
                view: v.id,
                message: "no depth map; pass --cloud to render one".into(),
            }),
        }
    };
    let ref_depth = depth_of(r)?;
    let target_depth = depth_of(t).unwrap_or_else(|_| ref_depth.clone());
    let estimator = build_estimator(&ctx.config, &target_depth);
    let conds = build_conditions(r, t, &ref_depth, estimator.as_ref(), ctx.config.depth_condition_source)?;
    let out = &ctx.out;
    let paths = vec![
        out.join(format!("warped_{target}.png")),
        out.join(format!("edges_{target}.png")),
        out.join(format!("depthcond_{target}.pfm")),
        out.join(format!("valid_{target}.png")),
    ];
    write_png(&paths[0], &conds.warped_image)?;
    write_png(&paths[1], &conds.edges.edges)?;
    write_depth_pfm(&paths[2], &conds.depth)?;
    write_png(&paths[3], &conds.validity)?;
    Ok(paths)
}

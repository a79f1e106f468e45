//! The `rpt` command line: run, eval, bench, synth, ablate.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::bench::{
    ablation_grid, bench_sequence, format_ablation_table, format_bench, run_ablation,
    AblationReport, ABLATION_SCHEMA,
};
use crate::io::{
    load_calibration, load_poses, read_json, read_text, resolve_joint_set, save_calibration,
    save_detections, write_atomic, write_json, DetectionsDoc, EvalDoc, IoError, PosesDoc,
    EVAL_SCHEMA,
};
use crate::metrics::{self, format_table, EvalOptions, Pose, DEFAULT_MATCH_THRESHOLD_MM};
use crate::pipeline::{CameraRig, Pipeline, PipelineConfig, ViewDetections};
use crate::runner::{eval_set_for, poses_document, run_sequence};
use crate::skeleton::JointSet;
use crate::synth::{build_fixture, CorruptionSpec, Motion, RigLayout, SceneSpec};
use crate::tracking::TrackerConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// A failure with its exit code and machine-readable record.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config { message: String, path: Option<PathBuf> },
    Data { message: String, path: Option<PathBuf> },
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            message: message.into(),
            path: None,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data {
            message: message.into(),
            path: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Data { .. } => EXIT_DATA,
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        let (kind, message, path) = match self {
            CliError::Config { message, path } => ("config_error", message, path),
            CliError::Data { message, path } => ("data_error", message, path),
        };
        serde_json::json!({
            "error": kind,
            "message": message,
            "path": path.as_ref().map(|p| p.display().to_string()),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data {
            path: Some(e.path().to_path_buf()),
            message: e.to_string(),
        }
    }
}

fn config_io(e: IoError) -> CliError {
    CliError::Config {
        path: Some(e.path().to_path_buf()),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "rpt", version, about = "Multi-view multi-person 3D pose triangulation")]
pub struct Cli {
    /// TOML file with pipeline and tracker overrides.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-pair work within a frame.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Skip track assignment and speed clipping.
    #[arg(long, global = true)]
    pub no_tracking: bool,
    /// Builtin joint-set name or joint-set JSON file.
    #[arg(long, global = true)]
    pub joint_set: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Triangulate a detection sequence.
    Run(RunArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Per-step latency on a single worker.
    Bench(BenchArgs),
    /// Write a synthetic calibration, ground truth, and detection set.
    Synth(SynthArgs),
    /// Run the ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Include per-frame wall-clock timings in the output document.
    #[arg(long)]
    pub with_timings: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Result document path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Text table path.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,500")]
    pub pck_thresholds: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD_MM)]
    pub match_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionKind {
    Static,
    Linear,
    Walk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutKind {
    Ring,
    Dome,
}

/// Synthetic scene parameters shared by `synth`, `bench`, and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long, default_value_t = 4)]
    pub persons: usize,
    #[arg(long, default_value_t = 5)]
    pub cameras: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t = MotionKind::Linear)]
    pub motion: MotionKind,
    /// Speed for linear motion (m/s) or step for walks (m).
    #[arg(long, default_value_t = 0.5)]
    pub motion_rate: f64,
    #[arg(long, value_enum, default_value_t = LayoutKind::Ring)]
    pub layout: LayoutKind,
    #[arg(long, default_value_t = 0.0)]
    pub noise_px: f64,
    #[arg(long, default_value_t = 0.0)]
    pub occlusion: f64,
    #[arg(long)]
    pub truncation: bool,
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub swap_rate: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Calibration of a recorded fixture; a synthetic scene is used when omitted.
    #[arg(long, requires = "detections")]
    pub calibration: Option<PathBuf>,
    #[arg(long, requires = "calibration")]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Machine-readable report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, requires_all = ["detections", "gt"])]
    pub calibration: Option<PathBuf>,
    #[arg(long, requires_all = ["calibration", "gt"])]
    pub detections: Option<PathBuf>,
    #[arg(long, requires_all = ["calibration", "detections"])]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,500")]
    pub pck_thresholds: Vec<f64>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub joint_set: Option<String>,
    pub threads: Option<usize>,
    pub frame_dt_s: f64,
    pub bench_repetitions: usize,
    pub pipeline: PipelineConfig,
    pub tracker: TrackerConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            joint_set: None,
            threads: None,
            frame_dt_s: 0.04,
            bench_repetitions: 1000,
            pipeline: PipelineConfig::default(),
            tracker: TrackerConfig::default(),
        }
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path).map_err(config_io)?;
        let cfg: ConfigFile = toml::from_str(&text).map_err(|e| CliError::Config {
            path: Some(path.to_path_buf()),
            message: format!("{}: {e}", path.display()),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.tracker.validate().map_err(CliError::config)?;
        if !(self.frame_dt_s > 0.0) {
            return Err(CliError::config("frame_dt_s must be positive"));
        }
        if self.bench_repetitions == 0 {
            return Err(CliError::config("bench_repetitions must be positive"));
        }
        Ok(())
    }
}

/// Everything resolved from global flags and the config file.
#[derive(Debug, Clone)]
struct Context {
    cfg: ConfigFile,
    threads: usize,
    tracking: bool,
    joint_set_flag: Option<String>,
    seed: u64,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let cfg = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        cfg.validate()?;
        let threads = cli.threads.or(cfg.threads).unwrap_or(1);
        if threads == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        Ok(Context {
            joint_set_flag: cli.joint_set.clone().or_else(|| cfg.joint_set.clone()),
            cfg,
            threads,
            tracking: !cli.no_tracking,
            seed: cli.seed.unwrap_or(0),
        })
    }

    fn joint_set(&self, fallback: &str) -> Result<JointSet, CliError> {
        let name = self.joint_set_flag.as_deref().unwrap_or(fallback);
        resolve_joint_set(name).map_err(config_io)
    }

    fn tracker(&self) -> Option<&TrackerConfig> {
        self.tracking.then_some(&self.cfg.tracker)
    }
}

fn check_views(rig: &CameraRig, frames: &[Vec<ViewDetections>], path: &Path) -> Result<(), CliError> {
    for (i, views) in frames.iter().enumerate() {
        for v in views {
            if rig.get(&v.view).is_none() {
                return Err(CliError::Data {
                    path: Some(path.to_path_buf()),
                    message: format!("frame {i}: view '{}' has no calibration", v.view),
                });
            }
        }
    }
    Ok(())
}

/// Loads calibration and detections, checking the joint set and view ids.
fn load_inputs(
    ctx: &Context,
    calibration: &Path,
    detections: &Path,
) -> Result<(JointSet, CameraRig, Vec<Vec<ViewDetections>>), CliError> {
    let rig = load_calibration(calibration)?;
    let doc: DetectionsDoc = read_json(detections)?;
    let joint_set = ctx.joint_set(&doc.joint_set)?;
    if doc.joint_set != joint_set.name {
        return Err(CliError::Data {
            path: Some(detections.to_path_buf()),
            message: format!(
                "detections use joint set '{}' but '{}' was requested",
                doc.joint_set, joint_set.name
            ),
        });
    }
    let seq = doc.into_sequence(detections, joint_set.joint_count())?;
    check_views(&rig, &seq.frames, detections)?;
    Ok((joint_set, rig, seq.frames))
}

fn pipeline_for(ctx: &Context, joint_set: &JointSet, config: &PipelineConfig) -> Result<Pipeline, CliError> {
    Ok(Pipeline::new(joint_set.clone(), config.clone())
        .map_err(|e| CliError::config(e.to_string()))?
        .with_threads(ctx.threads))
}

pub fn cmd_run(ctx_cli: &Cli, args: &RunArgs) -> Result<String, CliError> {
    let ctx = Context::from_cli(ctx_cli)?;
    let (joint_set, rig, frames) = load_inputs(&ctx, &args.calibration, &args.detections)?;
    let pipeline = pipeline_for(&ctx, &joint_set, &ctx.cfg.pipeline)?;
    let outputs = run_sequence(&pipeline, &rig, &frames, ctx.tracker(), ctx.cfg.frame_dt_s)
        .map_err(|e| CliError::data(e.to_string()))?;
    let doc = poses_document(&joint_set, &outputs, args.with_timings);
    write_json(&args.output, &doc)?;

    let n = outputs.len().max(1) as f64;
    let persons: usize = outputs.iter().map(|o| o.persons.len()).sum();
    let mut summary = format!("frames {}  persons {}\n", outputs.len(), persons);
    for (k, name) in crate::pipeline::StepTimings::ROW_NAMES.iter().enumerate() {
        let mean = outputs
            .iter()
            .map(|o| o.result.timings.rows()[k].as_secs_f64() * 1e6)
            .sum::<f64>()
            / n;
        summary.push_str(&format!("{name:<28} {mean:>10.1} us\n"));
    }
    Ok(summary)
}

fn parse_thresholds(t: &[f64]) -> Result<Vec<f64>, CliError> {
    if t.is_empty() || t.iter().any(|v| !(*v > 0.0)) {
        return Err(CliError::config("thresholds must be positive millimeters"));
    }
    Ok(t.to_vec())
}

pub fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<String, CliError> {
    let ctx = Context::from_cli(cli)?;
    let thresholds = parse_thresholds(&args.pck_thresholds)?;
    let (gt_doc, gt) = load_poses(&args.gt)?;
    let (pred_doc, pred) = load_poses(&args.pred)?;
    if gt_doc.joint_names != pred_doc.joint_names {
        return Err(CliError::Data {
            path: Some(args.pred.clone()),
            message: "predictions and ground truth use different joint lists".into(),
        });
    }
    let source = gt_doc.joint_set();
    let eval_set = match &ctx.joint_set_flag {
        Some(name) => resolve_joint_set(name).map_err(config_io)?,
        None => eval_set_for(&source),
    };
    let opts = EvalOptions {
        thresholds_mm: thresholds.clone(),
        match_threshold_mm: args.match_threshold,
    };
    let result = metrics::evaluate(&gt, &pred, &source, &eval_set, &opts)
        .map_err(|e| CliError::data(e.to_string()))?;
    let table = format_table(&result, &thresholds);
    if let Some(path) = &args.output {
        write_json(
            path,
            &EvalDoc {
                schema: EVAL_SCHEMA.into(),
                eval_joint_set: eval_set.name.clone(),
                thresholds_mm: thresholds,
                match_threshold_mm: args.match_threshold,
                result,
            },
        )?;
    }
    if let Some(path) = &args.table {
        write_atomic(path, table.as_bytes())?;
    }
    Ok(table)
}

impl SceneArgs {
    pub fn scene_spec(&self, joint_set: JointSet, seed: u64, frame_dt_s: f64) -> SceneSpec {
        let mut spec = SceneSpec::new(self.persons, self.cameras, joint_set, seed);
        spec.n_frames = self.frames;
        spec.frame_dt_s = frame_dt_s;
        spec.motion = match self.motion {
            MotionKind::Static => Motion::Static,
            MotionKind::Linear => Motion::Linear {
                speed_mps: self.motion_rate,
            },
            MotionKind::Walk => Motion::RandomWalk {
                step_m: self.motion_rate,
            },
        };
        spec.layout = match self.layout {
            LayoutKind::Ring => RigLayout::Ring,
            LayoutKind::Dome => RigLayout::Dome,
        };
        spec
    }

    pub fn corruption(&self, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            pixel_noise_sigma_px: self.noise_px,
            occlusion_rate: self.occlusion,
            truncation: self.truncation,
            false_positive_rate: self.fp_rate,
            swap_rate: self.swap_rate,
            seed,
            ..CorruptionSpec::default()
        }
    }
}

/// A synthetic fixture from scene flags: (joint set, rig, detections, ground truth).
fn synthetic_inputs(
    ctx: &Context,
    scene: &SceneArgs,
) -> Result<(JointSet, CameraRig, Vec<Vec<ViewDetections>>, Vec<Vec<Pose>>), CliError> {
    let joint_set = ctx.joint_set("body20")?;
    let spec = scene.scene_spec(joint_set.clone(), ctx.seed, ctx.cfg.frame_dt_s);
    let fixture = build_fixture(&spec, &scene.corruption(ctx.seed.wrapping_add(1)))
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok((
        joint_set,
        fixture.scene.rig,
        fixture.detections.frames,
        fixture.scene.frames,
    ))
}

pub fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<String, CliError> {
    let ctx = Context::from_cli(cli)?;
    let (joint_set, rig, frames, gt) = synthetic_inputs(&ctx, &args.scene)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| {
        CliError::from(IoError::Io {
            path: args.out_dir.clone(),
            source,
        })
    })?;
    let calib = args.out_dir.join("calibration.json");
    let det = args.out_dir.join("detections.json");
    let gt_path = args.out_dir.join("gt.json");
    save_calibration(&calib, &rig)?;
    save_detections(&det, &joint_set.name, &frames)?;
    write_json(&gt_path, &PosesDoc::from_poses(&joint_set, &gt))?;
    Ok(format!(
        "wrote {}, {}, {}\n",
        calib.display(),
        det.display(),
        gt_path.display()
    ))
}

pub fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<String, CliError> {
    let ctx = Context::from_cli(cli)?;
    if ctx.threads > 1 {
        warn!("bench always uses a single worker; ignoring --threads");
    }
    let (joint_set, rig, frames) = match (&args.calibration, &args.detections) {
        (Some(c), Some(d)) => load_inputs(&ctx, c, d)?,
        _ => {
            let (set, rig, frames, _) = synthetic_inputs(&ctx, &args.scene)?;
            (set, rig, frames)
        }
    };
    let reps = args.repetitions.unwrap_or(ctx.cfg.bench_repetitions);
    if reps == 0 {
        return Err(CliError::config("--repetitions must be positive"));
    }
    let report = bench_sequence(
        &joint_set,
        &ctx.cfg.pipeline,
        &rig,
        &frames,
        ctx.tracker(),
        ctx.cfg.frame_dt_s,
        reps,
    )
    .map_err(|e| CliError::data(e.to_string()))?;
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    Ok(format_bench(&report))
}

pub fn cmd_ablate(cli: &Cli, args: &AblateArgs) -> Result<String, CliError> {
    let ctx = Context::from_cli(cli)?;
    let thresholds = parse_thresholds(&args.pck_thresholds)?;
    let (joint_set, rig, frames, gt) = match (&args.calibration, &args.detections, &args.gt) {
        (Some(c), Some(d), Some(g)) => {
            let (set, rig, frames) = load_inputs(&ctx, c, d)?;
            let (gt_doc, gt) = load_poses(g)?;
            if gt_doc.joint_names != set.joint_names {
                return Err(CliError::Data {
                    path: Some(g.clone()),
                    message: "ground truth joint list differs from the detections' joint set".into(),
                });
            }
            (set, rig, frames, gt)
        }
        _ => synthetic_inputs(&ctx, &args.scene)?,
    };
    let opts = EvalOptions {
        thresholds_mm: thresholds.clone(),
        match_threshold_mm: DEFAULT_MATCH_THRESHOLD_MM,
    };
    let mut rows = Vec::new();
    for ablation in ablation_grid(&ctx.cfg.pipeline, ctx.tracking) {
        info!("ablation: {}", ablation.name);
        let row = run_ablation(
            &ablation,
            &joint_set,
            &rig,
            &frames,
            &gt,
            &ctx.cfg.tracker,
            ctx.cfg.frame_dt_s,
            &opts,
        )
        .map_err(CliError::data)?;
        rows.push(row);
    }
    let table = format_ablation_table(&rows, &thresholds);
    if let Some(path) = &args.output {
        write_json(
            path,
            &AblationReport {
                schema: ABLATION_SCHEMA.into(),
                rows,
            },
        )?;
    }
    Ok(table)
}

/// Dispatches a parsed command line, returning the stdout text.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Ablate(a) => cmd_ablate(cli, a),
    }
}

/// Parses `args`, runs the command, and reports as the binary would. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

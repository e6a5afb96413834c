//! simulate, detect, define-tool, validate-tools and track.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use irtrack::detection::{localize_markers, localize_markers_with_report, DetectionConfig, DropCounts};
use irtrack::format::to_json;
use irtrack::io::{read_frames, read_json, read_tools, write_ahf};
use irtrack::registry::{correspond_frames, define_tool_with_report, validate_distinctness, DefinitionSession, ToolFile};
use irtrack::sensor::{derive_seed, render_frame_with, RenderOptions, SceneSpec, SensorFrame};
use irtrack::tracking::Tracker;
use irtrack::{CameraIntrinsics, RigidTransform};
use serde::Serialize;

use crate::output::{emit, emit_json, noise_model, tracker_config, CliError, CliResult};
use crate::Global;

#[derive(Args)]
pub struct SimulateArgs {
    /// Scene JSON (tools with poses, stray markers, distractors, planes).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory for frame_NNNNN.ahf files and truth.json.
    #[arg(long)]
    out: PathBuf,
    /// Noise model JSON {a, b, c, valid_range}; defaults to the built-in model.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Camera intrinsics JSON; defaults to the 512x512, 127 degree sensor.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Frame rate used for timestamps, Hz.
    #[arg(long, default_value_t = 45.0)]
    rate: f64,
}

#[derive(Serialize)]
struct Truth<'a> {
    frames: usize,
    seed: u64,
    tools: Vec<TruthTool<'a>>,
}

#[derive(Serialize)]
struct TruthTool<'a> {
    name: &'a str,
    pose: RigidTransform,
}

fn frames_or(g: &Global, default: usize) -> usize {
    g.frames.unwrap_or(default)
}

pub fn simulate(g: &Global, a: SimulateArgs) -> CliResult {
    let scene: SceneSpec = read_json(&a.scene)?;
    scene.validate()?;
    let noise = noise_model(a.noise.as_deref())?;
    let intr = match &a.intrinsics {
        Some(p) => {
            let i: CameraIntrinsics = read_json(p)?;
            i.validate()?;
            i
        }
        None => CameraIntrinsics::default_sensor(),
    };
    if !(a.rate > 0.0) {
        return Err(CliError::usage("--rate must be positive"));
    }
    let n = frames_or(g, 100);
    fs::create_dir_all(&a.out).map_err(|e| CliError { code: 1, message: format!("{}: {e}", a.out.display()) })?;
    for k in 0..n {
        let opts = RenderOptions { timestamp: k as f64 / a.rate, quantize: true, window: None };
        let frame = render_frame_with(&scene, &intr, &noise, derive_seed(g.seed, 0, k as u64), &opts)?;
        let mut buf = Vec::new();
        write_ahf(&mut buf, &frame)?;
        let path = a.out.join(format!("frame_{k:05}.ahf"));
        fs::write(&path, buf).map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })?;
    }
    let truth = Truth {
        frames: n,
        seed: g.seed,
        tools: scene.tools.iter().map(|t| TruthTool { name: t.tool.name(), pose: t.pose }).collect(),
    };
    emit_json(Some(&a.out.join("truth.json")), &truth)?;
    emit(None, &format!("{}\n", to_json(&serde_json::json!({ "frames": n, "markers": scene.spheres().len() }))?))
}

#[derive(Args)]
pub struct DetectArgs {
    /// AHF file or directory of AHF files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reflectivity threshold.
    #[arg(long, default_value_t = irtrack::detection::DEFAULT_THRESHOLD)]
    threshold: u16,
    /// Marker sphere radius, mm.
    #[arg(long, default_value_t = irtrack::fixtures::MARKER_RADIUS)]
    radius: f64,
}

#[derive(Serialize)]
struct MarkerRecord {
    position_mm: [f64; 3],
    surface_depth_mm: f64,
    centroid_px: [f64; 2],
    area_px: usize,
    peak_intensity: u16,
}

#[derive(Serialize)]
struct FrameRecord {
    frame: usize,
    timestamp_s: f64,
    markers: Vec<MarkerRecord>,
    dropped: DropCounts,
}

fn detection_config(threshold: u16, radius: f64) -> CliResult<DetectionConfig> {
    let cfg = DetectionConfig { threshold, marker_radius: radius, ..DetectionConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn load_frames(path: &std::path::Path) -> CliResult<Vec<SensorFrame>> {
    let frames = read_frames(path)?;
    if frames.is_empty() {
        return Err(CliError::input(format!("{}: no AHF frames found", path.display())));
    }
    Ok(frames)
}

pub fn detect(_g: &Global, a: DetectArgs) -> CliResult {
    let cfg = detection_config(a.threshold, a.radius)?;
    let frames = load_frames(&a.input)?;
    let mut records = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let det = localize_markers_with_report(frame, &cfg)?;
        records.push(FrameRecord {
            frame: k,
            timestamp_s: frame.timestamp,
            markers: det
                .markers
                .iter()
                .map(|m| MarkerRecord {
                    position_mm: m.position.coords.into(),
                    surface_depth_mm: m.mean_depth,
                    centroid_px: [m.blob.centroid.u, m.blob.centroid.v],
                    area_px: m.blob.area,
                    peak_intensity: m.blob.peak_intensity,
                })
                .collect(),
            dropped: det.dropped,
        });
    }
    let mut text = irtrack::format::to_json_pretty(&serde_json::json!({ "frames": records }))?;
    text.push('\n');
    emit(a.out.as_deref(), &text)
}

#[derive(Args)]
pub struct DefineToolArgs {
    /// AHF frames showing only the new tool.
    #[arg(long = "in")]
    input: PathBuf,
    /// Tool name.
    #[arg(long)]
    name: String,
    /// Output tool JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-side tolerance used to admit frames, mm.
    #[arg(long, default_value_t = 1.0)]
    t_side: f64,
    /// Marker sphere radius, mm.
    #[arg(long, default_value_t = irtrack::fixtures::MARKER_RADIUS)]
    radius: f64,
}

pub fn define_tool(_g: &Global, a: DefineToolArgs) -> CliResult {
    let cfg = detection_config(irtrack::detection::DEFAULT_THRESHOLD, a.radius)?;
    let frames = load_frames(&a.input)?;
    let mut session: Option<DefinitionSession> = None;
    let mut skipped = 0usize;
    for frame in &frames {
        let points: Vec<_> = localize_markers(frame, &cfg)?.into_iter().map(|m| m.position).collect();
        match session.as_mut() {
            None if points.len() >= 3 => session = Some(DefinitionSession::new(points, a.t_side)?),
            None => skipped += 1,
            Some(s) => {
                s.push(points);
            }
        }
    }
    let session = session.ok_or_else(|| CliError::input("no frame shows at least 3 markers"))?;
    let ordered = correspond_frames(&session)?;
    let (tool, report) = define_tool_with_report(&ordered, &a.name, a.radius)?;
    let mut text = irtrack::format::to_json_pretty(&ToolFile::from(&tool))?;
    text.push('\n');
    emit(Some(&a.out), &text)?;
    let summary = serde_json::json!({
        "name": tool.name(),
        "markers": tool.marker_count(),
        "frames_used": ordered.len(),
        "frames_rejected": session.rejected() + skipped,
        "iterations": report.iterations,
        "mean_rms_mm": report.objective.last().copied().unwrap_or(0.0),
    });
    emit(None, &format!("{}\n", to_json(&summary)?))
}

#[derive(Args)]
pub struct ValidateToolsArgs {
    /// Tool file (one tool or an array).
    #[arg(long)]
    tools: PathBuf,
    /// Per-side threshold the tracker will use, mm.
    #[arg(long, default_value_t = 1.0)]
    t_side: f64,
}

pub fn validate_tools(_g: &Global, a: ValidateToolsArgs) -> CliResult {
    let tools = read_tools(&a.tools)?;
    let report = validate_distinctness(&tools, a.t_side)?;
    let value = serde_json::json!({
        "tools": tools.len(),
        "clean": report.is_clean(),
        "self_ambiguous": report.self_ambiguous,
        "cross_confusable": report.cross_confusable,
    });
    emit(None, &format!("{}\n", irtrack::format::to_json_pretty(&value)?))
}

#[derive(Args)]
pub struct TrackArgs {
    /// Tool file (one tool or an array).
    #[arg(long)]
    tools: PathBuf,
    /// AHF file or directory of AHF files.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON-lines pose log; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use raw depths instead of the per-marker filters.
    #[arg(long)]
    no_kalman: bool,
    /// Fixed per-side threshold, mm.
    #[arg(long)]
    t_side: Option<f64>,
    /// Multiplier on the per-side standard error.
    #[arg(long)]
    confidence: Option<f64>,
    /// Frames a tool may be missing before its filters reset.
    #[arg(long)]
    max_missed: Option<u32>,
    /// Noise model JSON used for gating and filtering.
    #[arg(long)]
    noise: Option<PathBuf>,
}

pub fn track(g: &Global, a: TrackArgs) -> CliResult {
    let tools = read_tools(&a.tools)?;
    let mut cfg = tracker_config(g)?;
    if a.noise.is_some() {
        cfg.noise = noise_model(a.noise.as_deref())?;
    }
    if a.no_kalman {
        cfg.kalman = false;
    }
    if let Some(t) = a.t_side {
        if !(t >= 0.0) {
            return Err(CliError::usage("--t-side must be >= 0"));
        }
        cfg.t_side_override = Some(t);
    }
    if let Some(c) = a.confidence {
        if !(c > 0.0) {
            return Err(CliError::usage("--confidence must be positive"));
        }
        cfg.confidence = c;
    }
    if let Some(m) = a.max_missed {
        cfg.max_missed = m;
    }
    let radius = tools.first().map(|t| t.marker_radius()).unwrap_or(irtrack::fixtures::MARKER_RADIUS);
    let det_cfg = detection_config(irtrack::detection::DEFAULT_THRESHOLD, radius)?;
    let frames = load_frames(&a.input)?;
    let mut tracker = Tracker::new(tools, cfg);
    let mut log = String::new();
    for frame in &frames {
        let dets = localize_markers(frame, &det_cfg)?;
        for obs in tracker.track_frame(&dets, frame.timestamp) {
            log.push_str(&to_json(&obs)?);
            log.push('\n');
        }
    }
    emit(a.out.as_deref(), &log)
}

//! accuracy, sweep, bench, latency and noise-fit.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use irtrack::eval::accuracy::{accuracy_suite, AccuracyConfig, Motion};
use irtrack::eval::latency::{estimate_latency, synthetic_trace, MotionTrace};
use irtrack::eval::noise::{fit_noise_quadratic, noise_study, NoiseStudyConfig};
use irtrack::eval::runtime::{runtime_bench, RuntimeConfig};
use irtrack::eval::stats::mean;
use irtrack::eval::workspace::{lateral_fov, workspace_sweep, SweepConfig};
use irtrack::eval::Rig;
use irtrack::fixtures::{facing_pose, standard_tools};
use irtrack::format::Csv;
use irtrack::io::read_tools;
use irtrack::par::with_jobs;
use irtrack::registry::ToolDefinition;
use irtrack::sensor::NoiseModel;
use irtrack::CameraIntrinsics;
use nalgebra::Vector3;

use crate::output::{emit, emit_json, f, noise_model, opt, read_pairs, tracker_config, CliError, CliResult};
use crate::Global;

/// First tool in `path`, or the first standard tool.
fn pick_tool(path: Option<&std::path::Path>) -> CliResult<ToolDefinition> {
    match path {
        Some(p) => read_tools(p)?
            .into_iter()
            .next()
            .ok_or_else(|| CliError::input(format!("{}: no tools", p.display()))),
        None => Ok(standard_tools().remove(0)),
    }
}

fn rig(noise: Option<&std::path::Path>, noiseless: bool, fov: Option<f64>) -> CliResult<Rig> {
    let mut rig = if noiseless { Rig::noiseless() } else { Rig { noise: noise_model(noise)?, ..Rig::default() } };
    if let Some(deg) = fov {
        rig.intrinsics = CameraIntrinsics::with_fov(512, 512, deg)?;
    }
    Ok(rig)
}

#[derive(Args)]
pub struct AccuracyArgs {
    /// Tool file; the first tool is used. Defaults to a built-in tool.
    #[arg(long)]
    tool: Option<PathBuf>,
    /// Nominal tool depth, mm.
    #[arg(long, default_value_t = 600.0)]
    depth: f64,
    /// Cross pairs sampled per repetition.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    /// Noise model JSON for the simulated sensor.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn accuracy(g: &Global, a: AccuracyArgs) -> CliResult {
    let tool = pick_tool(a.tool.as_deref())?;
    let rig = rig(a.noise.as_deref(), false, None)?;
    let mut tracker = tracker_config(g)?;
    tracker.noise = rig.noise;
    let cfg = AccuracyConfig {
        reps: g.reps.unwrap_or(20),
        frames: g.frames.unwrap_or(100),
        pairs: a.pairs,
        depth: a.depth,
        tracker,
        ..AccuracyConfig::default()
    };
    let report = with_jobs(g.jobs, |mode| accuracy_suite(&rig, &tool, &cfg, g.seed, mode))?;
    let mut csv = Csv::new(&["condition", "unit", "kalman_median", "kalman_iqr", "raw_median", "raw_iqr", "missed_frames"]);
    for c in &report.conditions {
        let unit = if matches!(c.motion, Motion::Rotation { .. }) { "deg" } else { "mm" };
        csv.row(&[
            c.motion.label(),
            unit.into(),
            f(c.kalman.median),
            f(c.kalman.iqr),
            f(c.raw.median),
            f(c.raw.iqr),
            c.missed_frames.to_string(),
        ]);
    }
    emit(a.csv.as_deref(), &csv.finish())?;
    emit_json(a.json.as_deref(), &report)
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Z,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Sweep direction in camera coordinates.
    #[arg(long, value_enum, default_value = "z")]
    axis: Axis,
    /// First station: depth for z sweeps, lateral offset for x sweeps, mm.
    #[arg(long, default_value_t = 250.0)]
    from: f64,
    /// Last station, mm.
    #[arg(long, default_value_t = 750.0)]
    to: f64,
    /// Station spacing, mm.
    #[arg(long, default_value_t = 10.0)]
    step: f64,
    /// Tool depth for x sweeps and the field-of-view search, mm.
    #[arg(long, default_value_t = 500.0)]
    depth: f64,
    /// Simulate a noiseless, unquantized sensor.
    #[arg(long)]
    noiseless: bool,
    /// Also move the tool sideways until lost and report the field of view.
    #[arg(long)]
    fov: bool,
    /// Camera field of view (degrees) instead of the default sensor.
    #[arg(long)]
    camera_fov: Option<f64>,
    /// Tool file; the first tool is used. Defaults to a built-in tool.
    #[arg(long)]
    tool: Option<PathBuf>,
    /// Noise model JSON for the simulated sensor.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn sweep(g: &Global, a: SweepArgs) -> CliResult {
    if !(a.to >= a.from) {
        return Err(CliError::usage("--to must not be below --from"));
    }
    let tool = pick_tool(a.tool.as_deref())?;
    let rig = rig(a.noise.as_deref(), a.noiseless, a.camera_fov)?;
    let mut tracker = tracker_config(g)?;
    tracker.noise = rig.noise;
    if a.noiseless && tracker.t_side_override.is_none() {
        // exact-only gating would reject float round-off
        tracker.t_side_override = Some(0.05);
    }
    let cfg = SweepConfig { frames: g.frames.unwrap_or(50), tracker };
    let (start, dir) = match a.axis {
        Axis::Z => (facing_pose(0.0, 0.0, a.from), Vector3::z()),
        Axis::X => (facing_pose(a.from, 0.0, a.depth), Vector3::x()),
    };
    let report = with_jobs(g.jobs, |mode| workspace_sweep(&rig, &tool, &start, dir, a.to - a.from, a.step, &cfg, g.seed, mode))?;
    let fov = if a.fov { Some(lateral_fov(&rig, &tool, a.depth, a.step, &cfg, g.seed)?) } else { None };
    let mut csv = Csv::new(&["commanded_mm", "frames_detected", "measured_mm", "error_mm"]);
    for s in &report.stations {
        csv.row(&[f(s.commanded), s.frames_detected.to_string(), opt(s.measured), opt(s.error)]);
    }
    emit(a.csv.as_deref(), &csv.finish())?;
    let summary = serde_json::json!({
        "axis": match a.axis { Axis::X => "x", Axis::Z => "z" },
        "stations": report.stations.len(),
        "direction": report.direction,
        "max_abs_error_mm": report.max_abs_error,
        "fov": fov,
        "configured_fov_deg": rig.intrinsics.fov_deg().0,
    });
    emit_json(a.json.as_deref(), &summary)
}

#[derive(Args)]
pub struct BenchArgs {
    /// Largest number of loaded and visible tools.
    #[arg(long, default_value_t = 5)]
    max_tools: usize,
    /// Detections per frame, topped up with loose markers.
    #[arg(long, default_value_t = 20)]
    detections: usize,
    /// Leave out wall-clock columns so the report is reproducible.
    #[arg(long)]
    no_timing: bool,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn bench(g: &Global, a: BenchArgs) -> CliResult {
    if a.max_tools == 0 || a.max_tools > standard_tools().len() {
        return Err(CliError::usage(format!("--max-tools must be within 1..={}", standard_tools().len())));
    }
    let cfg = RuntimeConfig {
        frames: g.frames.unwrap_or(10_000),
        target_detections: a.detections,
        tracker: tracker_config(g)?,
        ..RuntimeConfig::default()
    };
    let rows = runtime_bench(&Rig::default(), a.max_tools, &cfg, g.seed)?;
    let mut header = vec!["loaded", "visible", "mean_detections", "not_detected"];
    if !a.no_timing {
        header.extend(["track_ms", "track_hz", "detect_ms"]);
    }
    let mut csv = Csv::new(&header);
    for r in &rows {
        let mut cells = vec![r.loaded.to_string(), r.visible.to_string(), f(r.mean_detections), r.not_detected.join(";")];
        if !a.no_timing {
            cells.extend([f(r.track_ms), f(r.track_hz), f(r.detect_ms)]);
        }
        csv.row(&cells);
    }
    emit(a.csv.as_deref(), &csv.finish())?;
    let summary: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let mut v = serde_json::json!({
                "loaded": r.loaded,
                "visible": r.visible,
                "mean_detections": r.mean_detections,
                "not_detected": r.not_detected,
            });
            if !a.no_timing {
                v["track_ms"] = r.track_ms.into();
                v["detect_ms"] = r.detect_ms.into();
            }
            v
        })
        .collect();
    emit_json(a.json.as_deref(), &serde_json::json!({ "frames": cfg.frames, "rows": summary }))
}

#[derive(Args)]
pub struct LatencyArgs {
    /// Reference trace CSV (header, then t_s,x_mm rows).
    #[arg(long, requires = "test")]
    reference: Option<PathBuf>,
    /// Tracked trace CSV in the same layout.
    #[arg(long, requires = "reference")]
    test: Option<PathBuf>,
    /// Generate traces with this delay (s) instead of reading files.
    #[arg(long, conflicts_with_all = ["reference", "test"])]
    synthetic_delay: Option<f64>,
    /// Largest delay searched, s.
    #[arg(long, default_value_t = 1.0)]
    t_mov: f64,
    /// Sampling rate of synthetic traces, Hz.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Length of synthetic traces, s.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// White noise on the synthetic tracked trace, mm.
    #[arg(long, default_value_t = 0.05)]
    trace_noise: f64,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn latency(g: &Global, a: LatencyArgs) -> CliResult {
    let (reference, test) = match (&a.reference, &a.test, a.synthetic_delay) {
        (Some(r), Some(t), None) => {
            let (rt, rx) = read_pairs(r)?;
            let (tt, tx) = read_pairs(t)?;
            let wrap = |p: &PathBuf, e: irtrack::Error| CliError::input(format!("{}: {e}", p.display()));
            (MotionTrace::new(rt, rx).map_err(|e| wrap(r, e))?, MotionTrace::new(tt, tx).map_err(|e| wrap(t, e))?)
        }
        (None, None, Some(d)) => {
            if !(a.rate > 0.0 && a.duration > 0.0) {
                return Err(CliError::usage("--rate and --duration must be positive"));
            }
            (
                synthetic_trace(2.0, 50.0, a.rate, a.duration, 0.0, 0.0, 0.0, g.seed),
                synthetic_trace(2.0, 50.0, a.rate, a.duration, d, 12.0, a.trace_noise, g.seed ^ 1),
            )
        }
        _ => return Err(CliError::usage("give --reference and --test, or --synthetic-delay")),
    };
    let delay = estimate_latency(&reference, &test, a.t_mov)?;
    let mut csv = Csv::new(&["delay_s", "reference_samples", "test_samples"]);
    csv.row(&[f(delay), reference.t.len().to_string(), test.t.len().to_string()]);
    emit(a.csv.as_deref(), &csv.finish())?;
    emit_json(
        a.json.as_deref(),
        &serde_json::json!({ "delay_s": delay, "t_mov_s": a.t_mov, "synthetic_delay_s": a.synthetic_delay }),
    )
}

#[derive(Args)]
pub struct NoiseFitArgs {
    /// Fit measured (depth_mm, sigma_mm) rows instead of simulating.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Number of plane depths simulated.
    #[arg(long, default_value_t = 48)]
    depths: usize,
    /// Side of the observed image patch, pixels.
    #[arg(long, default_value_t = 32)]
    roi: usize,
    /// Round simulated depth to whole millimetres.
    #[arg(long)]
    quantize: bool,
    /// Noise model JSON simulated; defaults to the built-in model.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn noise_fit(g: &Global, a: NoiseFitArgs) -> CliResult {
    if let Some(p) = &a.input {
        let (d, s) = read_pairs(p)?;
        let (fit, r2) = fit_noise_quadratic(&d, &s)?;
        let mut csv = Csv::new(&["a_mm", "b", "c_per_mm", "r2"]);
        csv.row(&[f(fit.a), f(fit.b), f(fit.c), f(r2)]);
        emit(a.csv.as_deref(), &csv.finish())?;
        return emit_json(a.json.as_deref(), &serde_json::json!({ "fit": fit, "r2": r2 }));
    }
    let truth: NoiseModel = noise_model(a.noise.as_deref())?;
    let cfg = NoiseStudyConfig {
        depths: a.depths,
        frames: g.frames.unwrap_or(300),
        roi: a.roi,
        quantize: a.quantize,
        ..NoiseStudyConfig::default()
    };
    let study = with_jobs(g.jobs, |mode| noise_study(&CameraIntrinsics::default_sensor(), &truth, &cfg, g.seed, mode))?;
    let mut csv = Csv::new(&["depth_mm", "sigma_mm", "model_sigma_mm", "ad_statistic_mean", "ad_non_reject_fraction"]);
    for d in &study.per_depth {
        let stats: Vec<f64> = d.normality.iter().map(|t| t.statistic).collect();
        let ok = d.normality.iter().filter(|t| !t.reject).count() as f64 / d.normality.len().max(1) as f64;
        csv.row(&[f(d.depth), f(d.sigma), f(truth.sigma_clamped(d.depth).0), f(mean(&stats)), f(ok)]);
    }
    emit(a.csv.as_deref(), &csv.finish())?;
    emit_json(
        a.json.as_deref(),
        &serde_json::json!({
            "truth": truth,
            "fit": study.fit,
            "r2": study.r2,
            "non_reject_rate": study.non_reject_rate,
            "depths": cfg.depths,
            "frames": cfg.frames,
        }),
    )
}

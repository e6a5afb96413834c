//! Offline throughput: time `track_frame` on pre-detected frames for every
//! combination of loaded and visible tools.

use std::time::Instant;

use serde::Serialize;

use super::{sub_seed, Rig};
use crate::detection::{localize_markers, DetectedMarker};
use crate::error::{Error, Result};
use crate::fixtures::{grid_scene, ring_strays, standard_tools};
use crate::sensor::{render_frame_with, RenderOptions};
use crate::tracking::{Tracker, TrackerConfig};

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeConfig {
    /// Timed `track_frame` calls per grid cell.
    pub frames: usize,
    /// Distinct rendered frames cycled through.
    pub distinct_frames: usize,
    /// Detections per frame are topped up with loose markers to this count.
    pub target_detections: usize,
    pub depth: f64,
    pub tracker: TrackerConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self { frames: 10_000, distinct_frames: 32, target_detections: 20, depth: 550.0, tracker: TrackerConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeRow {
    pub loaded: usize,
    pub visible: usize,
    pub mean_detections: f64,
    /// Mean wall time of one `track_frame` call, ms.
    pub track_ms: f64,
    pub track_hz: f64,
    /// Mean wall time of marker detection on the same frames, ms.
    pub detect_ms: f64,
    /// Loaded tools found in fewer than half of the frames.
    pub not_detected: Vec<String>,
}

/// Detections for `visible` standard tools plus filler markers.
pub fn benchmark_frames(rig: &Rig, visible: usize, cfg: &RuntimeConfig, seed: u64) -> Result<(Vec<Vec<DetectedMarker>>, f64)> {
    let mut scene = grid_scene(visible, cfg.depth);
    let strays = cfg.target_detections.saturating_sub(4 * visible);
    scene.stray_markers = ring_strays(strays, 260.0, cfg.depth - 80.0);
    let mut frames = Vec::with_capacity(cfg.distinct_frames);
    let mut detect_s = 0.0;
    for f in 0..cfg.distinct_frames.max(1) {
        let opts = RenderOptions { timestamp: f as f64 / 45.0, quantize: rig.quantize, window: None };
        let frame = render_frame_with(&scene, &rig.intrinsics, &rig.noise, sub_seed(seed, visible as u64, f as u64), &opts)?;
        let t0 = Instant::now();
        let dets = localize_markers(&frame, &rig.detection)?;
        detect_s += t0.elapsed().as_secs_f64();
        frames.push(dets);
    }
    Ok((frames, 1e3 * detect_s / cfg.distinct_frames.max(1) as f64))
}

pub fn runtime_cell(rig: &Rig, loaded: usize, visible: usize, cfg: &RuntimeConfig, seed: u64) -> Result<RuntimeRow> {
    let tools = standard_tools();
    if loaded == 0 || loaded > tools.len() || visible > tools.len() {
        return Err(Error::InvalidArgument(format!("loaded/visible must be within 1..={}", tools.len())));
    }
    let (frames, detect_ms) = benchmark_frames(rig, visible, cfg, seed)?;
    let loaded_tools: Vec<_> = tools.into_iter().take(loaded).collect();
    let mut tracker = Tracker::new(loaded_tools.clone(), cfg.tracker.clone());
    let mut hits = vec![0usize; loaded];
    let t0 = Instant::now();
    for k in 0..cfg.frames {
        let dets = &frames[k % frames.len()];
        for obs in tracker.track_frame(dets, k as f64 / 45.0) {
            if let Some(i) = loaded_tools.iter().position(|t| t.name() == obs.tool) {
                hits[i] += 1;
            }
        }
    }
    let track_s = t0.elapsed().as_secs_f64() / cfg.frames.max(1) as f64;
    let not_detected = loaded_tools
        .iter()
        .zip(&hits)
        .filter(|(_, &h)| 2 * h < cfg.frames)
        .map(|(t, _)| t.name().to_string())
        .collect();
    Ok(RuntimeRow {
        loaded,
        visible,
        mean_detections: frames.iter().map(Vec::len).sum::<usize>() as f64 / frames.len() as f64,
        track_ms: 1e3 * track_s,
        track_hz: 1.0 / track_s,
        detect_ms,
        not_detected,
    })
}

/// Full grid, loaded and visible each ranging over `1..=max_tools`.
pub fn runtime_bench(rig: &Rig, max_tools: usize, cfg: &RuntimeConfig, seed: u64) -> Result<Vec<RuntimeRow>> {
    let mut rows = Vec::new();
    for loaded in 1..=max_tools {
        for visible in 1..=max_tools {
            rows.push(runtime_cell(rig, loaded, visible, cfg, seed)?);
        }
    }
    Ok(rows)
}

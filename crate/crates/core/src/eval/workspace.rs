//! Workspace sweeps: step a tool along a line, average its pose at every
//! station and compare the measured displacement with the commanded one.
//! A lateral sweep towards the image border also yields the usable field of
//! view.

use nalgebra::Vector3;
use serde::Serialize;

use super::{sub_seed, Rig};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::par::{map_range, Parallelism};
use crate::registry::ToolDefinition;
use crate::sensor::single_tool_scene;
use crate::tracking::{Tracker, TrackerConfig};

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    /// Frames averaged per station.
    pub frames: usize,
    pub tracker: TrackerConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { frames: 50, tracker: TrackerConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Station {
    /// Commanded distance from the first station, mm.
    pub commanded: f64,
    pub frames_detected: usize,
    /// Mean tool position, camera frame, mm; `None` if never detected.
    pub mean_position: Option<[f64; 3]>,
    /// Measured distance from the first detected station along the
    /// measured motion direction, mm.
    pub measured: Option<f64>,
    /// `measured - (commanded - commanded at first detected station)`.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub stations: Vec<Station>,
    pub direction: Option<[f64; 3]>,
    pub max_abs_error: f64,
}

/// Mean pose translation at one station and the last pose seen.
fn observe_station(
    rig: &Rig,
    tool: &ToolDefinition,
    pose: &RigidTransform,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<(usize, Option<Vector3<f64>>, Option<RigidTransform>)> {
    let scene = single_tool_scene(tool, *pose);
    let mut tracker = Tracker::new(vec![tool.clone()], cfg.tracker.clone());
    let mut sum = Vector3::zeros();
    let mut n = 0;
    let mut last = None;
    for f in 0..cfg.frames {
        let ts = f as f64 / 45.0;
        let dets = rig.observe(&scene, sub_seed(seed, 0, f as u64), ts)?;
        if let Some(obs) = tracker.track_frame(&dets, ts).into_iter().next() {
            sum += obs.pose.translation;
            n += 1;
            last = Some(obs.pose);
        }
    }
    Ok((n, (n > 0).then(|| sum / n as f64), last))
}

/// Sweeps `tool` from `start` along the unit `direction` for `distance` mm
/// in steps of `step` mm.
#[allow(clippy::too_many_arguments)]
pub fn workspace_sweep(
    rig: &Rig,
    tool: &ToolDefinition,
    start: &RigidTransform,
    direction: Vector3<f64>,
    distance: f64,
    step: f64,
    cfg: &SweepConfig,
    seed: u64,
    mode: Parallelism,
) -> Result<SweepReport> {
    if !(step > 0.0 && distance >= 0.0) || (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("sweep needs a positive step and unit direction".into()));
    }
    let count = (distance / step + 1e-9).floor() as usize + 1;
    let observed = map_range(count, mode, |k| {
        let commanded = k as f64 * step;
        let pose = RigidTransform::from_translation(direction * commanded).compose(start);
        observe_station(rig, tool, &pose, cfg, sub_seed(seed, 0x5e, k as u64)).map(|(n, mean, _)| (commanded, n, mean))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let detected: Vec<&(f64, usize, Option<Vector3<f64>>)> = observed.iter().filter(|s| s.2.is_some()).collect();
    let axis = match (detected.first(), detected.last()) {
        (Some(a), Some(b)) if b.0 > a.0 => Some((b.2.unwrap() - a.2.unwrap()).normalize()),
        _ => None,
    };
    let origin = detected.first().map(|s| (s.0, s.2.unwrap()));
    let mut max_abs_error: f64 = 0.0;
    let stations = observed
        .iter()
        .map(|&(commanded, n, mean)| {
            let (measured, error) = match (mean, axis, origin) {
                (Some(m), Some(u), Some((c0, p0))) => {
                    let measured = (m - p0).dot(&u);
                    let error = measured - (commanded - c0);
                    max_abs_error = max_abs_error.max(error.abs());
                    (Some(measured), Some(error))
                }
                (Some(_), None, _) => (Some(0.0), Some(0.0)),
                _ => (None, None),
            };
            Station { commanded, frames_detected: n, mean_position: mean.map(Into::into), measured, error }
        })
        .collect();
    Ok(SweepReport { stations, direction: axis.map(Into::into), max_abs_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct FovReport {
    /// Lateral offset of the last station where the tool was found, mm.
    pub last_station_mm: f64,
    /// Largest `x / z` of any tool marker under the estimated pose there.
    pub x_max_over_d: f64,
    pub fov_deg: f64,
}

/// Moves the tool along +x at `depth` until it is lost and converts the
/// outermost tracked marker direction into a field of view,
/// `2 atan(x_max / d)`, assuming a symmetric camera.
pub fn lateral_fov(rig: &Rig, tool: &ToolDefinition, depth: f64, step: f64, cfg: &SweepConfig, seed: u64) -> Result<FovReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    let mut k = 0usize;
    loop {
        let x = k as f64 * step;
        if x > 10.0 * depth {
            break;
        }
        let pose = RigidTransform::from_translation(Vector3::new(x, 0.0, depth));
        let (n, _, last) = observe_station(rig, tool, &pose, cfg, sub_seed(seed, 0xf0, k as u64))?;
        let Some(p) = last else { break };
        if n == 0 {
            break;
        }
        let ratio = tool
            .markers()
            .iter()
            .map(|m| {
                let q = p.apply(m);
                q.x / q.z
            })
            .fold(f64::MIN, f64::max);
        best = Some((x, ratio));
        k += 1;
    }
    let (x, ratio) = best.ok_or_else(|| Error::DegenerateGeometry("tool never detected on the sweep".into()))?;
    Ok(FovReport { last_station_mm: x, x_max_over_d: ratio, fov_deg: 2.0 * ratio.atan().to_degrees() })
}

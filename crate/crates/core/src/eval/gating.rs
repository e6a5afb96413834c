//! Monte-Carlo check of the matching thresholds: how often does the true
//! marker assignment of a noisy, rendered frame pass both gates?

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sub_seed, Rig};
use crate::error::Result;
use crate::geometry::{Point3, RigidTransform};
use crate::par::{map_range, Parallelism};
use crate::registry::ToolDefinition;
use crate::sensor::single_tool_scene;
use crate::tracking::{passes, thresholds, LengthTable, TrackerConfig};

#[derive(Debug, Clone, Serialize)]
pub struct GatingConfig {
    pub frames: usize,
    pub depth_range: [f64; 2],
    /// Largest tilt of the tool plane away from the camera, degrees.
    pub max_tilt_deg: f64,
    pub lateral_mm: f64,
    pub tracker: TrackerConfig,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self {
            frames: 10_000,
            depth_range: [250.0, 750.0],
            max_tilt_deg: 45.0,
            lateral_mm: 60.0,
            tracker: TrackerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GatingReport {
    /// Frames where every marker was detected and assigned.
    pub evaluated: usize,
    /// Frames lost to detection (marker missing or merged).
    pub incomplete: usize,
    pub side_pass: usize,
    pub shape_pass: usize,
    pub both_pass: usize,
}

impl GatingReport {
    pub fn pass_rate(&self) -> f64 {
        self.both_pass as f64 / self.evaluated.max(1) as f64
    }
}

#[derive(Clone, Copy)]
enum Outcome {
    Incomplete,
    Evaluated { side: bool, shape: bool },
}

pub fn gating_monte_carlo(
    rig: &Rig,
    tool: &ToolDefinition,
    cfg: &GatingConfig,
    seed: u64,
    mode: Parallelism,
) -> Result<GatingReport> {
    let outcomes = map_range(cfg.frames, mode, |f| one_frame(rig, tool, cfg, sub_seed(seed, 0x9a7e, f as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rep = GatingReport::default();
    for o in outcomes {
        match o {
            Outcome::Incomplete => rep.incomplete += 1,
            Outcome::Evaluated { side, shape } => {
                rep.evaluated += 1;
                rep.side_pass += usize::from(side);
                rep.shape_pass += usize::from(shape);
                rep.both_pass += usize::from(side && shape);
            }
        }
    }
    Ok(rep)
}

fn one_frame(rig: &Rig, tool: &ToolDefinition, cfg: &GatingConfig, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = cfg.lateral_mm;
    let t = Vector3::new(
        rng.random_range(-l..=l),
        rng.random_range(-l..=l),
        rng.random_range(cfg.depth_range[0]..=cfg.depth_range[1]),
    );
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let spin: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt = rng.random_range(0.0..=cfg.max_tilt_deg).to_radians();
    let pose = RigidTransform::from_axis_angle(&Vector3::new(phi.cos(), phi.sin(), 0.0), tilt, t)
        .compose(&RigidTransform::from_axis_angle(&Vector3::z(), spin, Vector3::zeros()));
    let dets = rig.observe(&single_tool_scene(tool, pose), sub_seed(seed, 1, 0), 0.0)?;

    // true assignment: nearest detection to each true center
    let truth: Vec<Point3> = tool.markers().iter().map(|m| pose.apply(m)).collect();
    let mut assigned = Vec::with_capacity(truth.len());
    for p in &truth {
        let best = dets
            .iter()
            .enumerate()
            .map(|(i, d)| (i, (d.position - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, dist)) if dist < 3.0 * tool.marker_radius() && !assigned.contains(&i) => assigned.push(i),
            _ => return Ok(Outcome::Incomplete),
        }
    }
    if dets.len() != truth.len() {
        return Ok(Outcome::Incomplete);
    }
    let anchor = {
        let mut d: Vec<f64> = dets.iter().map(|d| d.mean_depth).collect();
        d.sort_by(f64::total_cmp);
        let n = d.len();
        if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) }
    };
    let th = thresholds(&cfg.tracker.noise, anchor, tool.marker_count(), &cfg.tracker);
    let pts: Vec<Point3> = assigned.iter().map(|&i| dets[i].position).collect();
    let measured = LengthTable::new(&pts);
    let n = tool.marker_count();
    let mut side = true;
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let beta = (tool.lengths().get(i, j) - measured.get(i, j)).abs();
            side &= passes(beta, th.t_side);
            sum += beta;
        }
    }
    let loss = sum / (n * (n - 1)) as f64;
    Ok(Outcome::Evaluated { side, shape: passes(loss, th.t_shape) })
}

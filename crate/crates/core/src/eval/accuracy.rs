//! Static accuracy protocol: a tool is held still at pose A for a batch of
//! frames, moved by a known step to pose B for another batch, and random
//! cross pairs of A and B estimates are compared with the commanded step.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::Summary;
use super::{sub_seed, Rig};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::par::{map_range, Parallelism};
use crate::registry::ToolDefinition;
use crate::sensor::single_tool_scene;
use crate::tracking::{Tracker, TrackerConfig};

/// Commanded motion between the two static poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Translation along camera x, mm.
    X { mm: f64 },
    /// Translation along camera z, mm.
    Z { mm: f64 },
    /// Rotation about the camera y axis through the tool origin, degrees.
    Rotation { deg: f64 },
}

impl Motion {
    pub fn label(&self) -> String {
        match self {
            Motion::X { mm } => format!("x_{mm}mm"),
            Motion::Z { mm } => format!("z_{mm}mm"),
            Motion::Rotation { deg } => format!("rot_{deg}deg"),
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Motion::X { mm } | Motion::Z { mm } => mm,
            Motion::Rotation { deg } => deg,
        }
    }

    /// Pose B for base pose A.
    pub fn apply(&self, a: &RigidTransform) -> RigidTransform {
        match *self {
            Motion::X { mm } => RigidTransform::from_translation(Vector3::x() * mm).compose(a),
            Motion::Z { mm } => RigidTransform::from_translation(Vector3::z() * mm).compose(a),
            Motion::Rotation { deg } => {
                let r = RigidTransform::from_axis_angle(&Vector3::y(), deg.to_radians(), Vector3::zeros());
                RigidTransform { rotation: r.rotation * a.rotation, translation: a.translation }
            }
        }
    }

    /// Absolute error of the motion estimated between two measured poses.
    pub fn error(&self, a: &RigidTransform, b: &RigidTransform) -> f64 {
        match *self {
            Motion::X { mm } => ((b.translation - a.translation).x - mm).abs(),
            Motion::Z { mm } => ((b.translation - a.translation).z - mm).abs(),
            Motion::Rotation { deg } => {
                let rel = b.rotation * a.rotation.transpose();
                (crate::geometry::rotation_angle(&rel).to_degrees() - deg).abs()
            }
        }
    }

    /// The six conditions of the standard protocol.
    pub fn standard() -> Vec<Motion> {
        vec![
            Motion::X { mm: 1.0 },
            Motion::X { mm: 20.0 },
            Motion::Z { mm: 1.0 },
            Motion::Z { mm: 20.0 },
            Motion::Rotation { deg: 10.0 },
            Motion::Rotation { deg: 50.0 },
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyConfig {
    pub reps: usize,
    /// Static frames per pose.
    pub frames: usize,
    /// Cross pairs sampled per repetition.
    pub pairs: usize,
    /// Nominal tool depth, mm.
    pub depth: f64,
    /// Uniform jitter of the base position per repetition, mm.
    pub jitter_mm: f64,
    /// Largest random tilt of the base pose, degrees.
    pub jitter_deg: f64,
    pub tracker: TrackerConfig,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            frames: 100,
            pairs: 10_000,
            depth: 600.0,
            jitter_mm: 30.0,
            jitter_deg: 10.0,
            tracker: TrackerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub motion: Motion,
    /// Pooled absolute errors with per-marker depth filtering.
    pub kalman: Summary,
    /// Pooled absolute errors on the same frames without filtering.
    pub raw: Summary,
    /// Frames in which the tool was not found.
    pub missed_frames: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub reps: usize,
    pub frames: usize,
    pub pairs: usize,
    pub conditions: Vec<ConditionReport>,
}

fn random_base(cfg: &AccuracyConfig, rng: &mut ChaCha8Rng) -> RigidTransform {
    let j = cfg.jitter_mm;
    let t = Vector3::new(rng.random_range(-j..=j), rng.random_range(-j..=j), cfg.depth + rng.random_range(-j..=j));
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt = rng.random_range(0.0..=cfg.jitter_deg).to_radians();
    RigidTransform::from_axis_angle(&Vector3::new(phi.cos(), phi.sin(), 0.0), tilt, t)
}

struct RepResult {
    kalman: Vec<f64>,
    raw: Vec<f64>,
    missed: usize,
}

/// Runs one condition over `cfg.reps` independent repetitions.
pub fn accuracy_experiment(
    rig: &Rig,
    tool: &ToolDefinition,
    motion: Motion,
    cfg: &AccuracyConfig,
    seed: u64,
    mode: Parallelism,
) -> Result<ConditionReport> {
    if cfg.reps == 0 || cfg.frames == 0 || cfg.pairs == 0 {
        return Err(Error::InvalidArgument("reps, frames and pairs must be positive".into()));
    }
    let reps = map_range(cfg.reps, mode, |r| run_rep(rig, tool, motion, cfg, sub_seed(seed, 0xacc, r as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut kalman = Vec::with_capacity(cfg.reps * cfg.pairs);
    let mut raw = Vec::with_capacity(cfg.reps * cfg.pairs);
    let mut missed = 0;
    for r in reps {
        kalman.extend(r.kalman);
        raw.extend(r.raw);
        missed += r.missed;
    }
    if kalman.is_empty() {
        return Err(Error::DegenerateGeometry("tool never tracked at one of the poses".into()));
    }
    Ok(ConditionReport { motion, kalman: Summary::of(&kalman), raw: Summary::of(&raw), missed_frames: missed })
}

/// All standard conditions.
pub fn accuracy_suite(
    rig: &Rig,
    tool: &ToolDefinition,
    cfg: &AccuracyConfig,
    seed: u64,
    mode: Parallelism,
) -> Result<AccuracyReport> {
    let conditions = Motion::standard()
        .into_iter()
        .enumerate()
        .map(|(k, m)| accuracy_experiment(rig, tool, m, cfg, sub_seed(seed, 0xc0, k as u64), mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyReport { reps: cfg.reps, frames: cfg.frames, pairs: cfg.pairs, conditions })
}

fn run_rep(rig: &Rig, tool: &ToolDefinition, motion: Motion, cfg: &AccuracyConfig, seed: u64) -> Result<RepResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_base(cfg, &mut rng);
    let b = motion.apply(&a);
    let mut missed = 0;
    let mut series = Vec::new();
    for (k, pose) in [a, b].iter().enumerate() {
        let scene = single_tool_scene(tool, *pose);
        let mut filtered = Tracker::new(vec![tool.clone()], TrackerConfig { kalman: true, ..cfg.tracker.clone() });
        let mut plain = Tracker::new(vec![tool.clone()], TrackerConfig { kalman: false, ..cfg.tracker.clone() });
        let (mut fk, mut fr) = (Vec::new(), Vec::new());
        for f in 0..cfg.frames {
            let ts = f as f64 / 45.0;
            let dets = rig.observe(&scene, sub_seed(seed, k as u64 + 1, f as u64), ts)?;
            let ok = filtered.track_frame(&dets, ts);
            let or = plain.track_frame(&dets, ts);
            match (ok.first(), or.first()) {
                (Some(x), Some(y)) => {
                    fk.push(x.pose);
                    fr.push(y.pose);
                }
                _ => missed += 1,
            }
        }
        series.push((fk, fr));
    }
    let (ak, ar) = &series[0];
    let (bk, br) = &series[1];
    let (mut kalman, mut raw) = (Vec::new(), Vec::new());
    if !ak.is_empty() && !bk.is_empty() {
        for _ in 0..cfg.pairs {
            let i = rng.random_range(0..ak.len());
            let j = rng.random_range(0..bk.len());
            kalman.push(motion.error(&ak[i], &bk[j]));
            raw.push(motion.error(&ar[i], &br[j]));
        }
    }
    Ok(RepResult { kalman, raw, missed })
}

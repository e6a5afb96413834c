//! Navigation geometry downstream of tracking: chaining transforms between
//! named frames, registering the headset display, pivot calibration and
//! trajectory scoring.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// One timestamped edge sample mapping child coordinates into the parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    /// `None` marks a static edge, valid at all times.
    pub timestamp: Option<f64>,
    pub transform: RigidTransform,
}

/// Directed graph of coordinate frames.
///
/// An edge `parent <- child` stores `T_child^parent`; walking it backwards
/// uses the inverse. Queries at time `t` use each edge's latest sample with
/// timestamp `<= t`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FrameGraph {
    edges: BTreeMap<(String, String), Vec<EdgeSample>>,
}

impl FrameGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `T_child^parent` valid from `timestamp` on.
    pub fn set_edge(&mut self, parent: &str, child: &str, timestamp: Option<f64>, transform: RigidTransform) {
        let samples = self.edges.entry((parent.to_string(), child.to_string())).or_default();
        samples.push(EdgeSample { timestamp, transform });
        samples.sort_by(|a, b| {
            a.timestamp.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.timestamp.unwrap_or(f64::NEG_INFINITY))
        });
    }

    pub fn set_static(&mut self, parent: &str, child: &str, transform: RigidTransform) {
        self.set_edge(parent, child, None, transform);
    }

    fn sample(&self, parent: &str, child: &str, t: f64) -> Option<RigidTransform> {
        let samples = self.edges.get(&(parent.to_string(), child.to_string()))?;
        samples
            .iter()
            .rev()
            .find(|s| s.timestamp.is_none_or(|ts| ts <= t))
            .map(|s| s.transform)
    }

    /// `T_from^to`-style lookup of a single hop in either direction: the
    /// transform mapping `b` coordinates into `a`.
    pub fn hop(&self, a: &str, b: &str, t: f64) -> Result<RigidTransform> {
        if let Some(x) = self.sample(a, b, t) {
            return Ok(x);
        }
        if let Some(x) = self.sample(b, a, t) {
            return Ok(x.inverse());
        }
        Err(Error::PathNotFound { from: a.to_string(), to: b.to_string() })
    }
}

/// Composes hops along `path`. For `[W, H, A, S]` this is
/// `T_H^W · T_A^H · T_S^A`, mapping the last frame into the first.
pub fn chain_pose(graph: &FrameGraph, path: &[&str], t: f64) -> Result<RigidTransform> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let mut acc = RigidTransform::identity();
    for pair in path.windows(2) {
        acc = acc.compose(&graph.hop(pair[0], pair[1], t)?);
    }
    Ok(acc)
}

/// Camera-to-display calibration `T_A^H = (T_H^W)^-1 · T_M^W · (T_SM^A)^-1`.
pub fn solve_display_registration(
    t_h_w: &RigidTransform,
    t_m_w: &RigidTransform,
    t_sm_a: &RigidTransform,
) -> RigidTransform {
    t_h_w.inverse().compose(t_m_w).compose(&t_sm_a.inverse())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PivotResult {
    /// Tip position in the tool frame, mm.
    pub tip: Vector3<f64>,
    /// Fixed pivot point in the tracker frame, mm.
    pub pivot: Vector3<f64>,
    pub rms: f64,
}

/// Least-squares pivot calibration from tool poses rotating about a fixed
/// tip: solves `R_i · tip - pivot = -t_i` for all poses at once.
pub fn pivot_calibrate(poses: &[RigidTransform]) -> Result<PivotResult> {
    if poses.len() < 3 {
        return Err(Error::DegeneratePivot(format!("need at least 3 poses, got {}", poses.len())));
    }
    let n = poses.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 6);
    let mut b = DVector::<f64>::zeros(3 * n);
    for (i, pose) in poses.iter().enumerate() {
        a.view_mut((3 * i, 0), (3, 3)).copy_from(&pose.rotation);
        a.view_mut((3 * i, 3), (3, 3)).copy_from(&(-nalgebra::Matrix3::identity()));
        b.rows_mut(3 * i, 3).copy_from(&(-pose.translation));
    }
    let svd = a.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    // the system has rank 6 only when rotations span two independent axes
    if sv[5] <= 1e-6 * sv[0] {
        return Err(Error::DegeneratePivot("poses lack rotational diversity".into()));
    }
    let x = svd.solve(&b, 1e-12).map_err(|e| Error::DegeneratePivot(e.to_string()))?;
    let tip = Vector3::new(x[0], x[1], x[2]);
    let pivot = Vector3::new(x[3], x[4], x[5]);
    let residual = &a * &x - &b;
    let rms = (residual.norm_squared() / n as f64).sqrt();
    Ok(PivotResult { tip, pivot, rms })
}

/// Insertion path: entry point and unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub entry: [f64; 3],
    pub direction: [f64; 3],
}

impl Trajectory {
    pub fn new(entry: Point3, direction: Vector3<f64>) -> Self {
        Self { entry: entry.coords.into(), direction: direction.into() }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self::new(t.apply(&Point3::from(self.entry)), t.apply_vector(&Vector3::from(self.direction)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryError {
    pub translation_mm: f64,
    pub angle_deg: f64,
}

/// Lateral offset of the executed entry from the planned axis, and the
/// angle between the two directions after aligning their sense.
pub fn trajectory_error(planned: &Trajectory, executed: &Trajectory) -> Result<TrajectoryError> {
    let p = Vector3::from(planned.direction);
    let mut e = Vector3::from(executed.direction);
    for d in [&p, &e] {
        if (d.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("direction norm {} is not 1", d.norm())));
        }
    }
    if p.dot(&e) < 0.0 {
        e = -e;
    }
    // atan2 keeps small angles accurate where acos loses digits
    let angle = p.cross(&e).norm().atan2(p.dot(&e));
    let diff = Vector3::from(executed.entry) - Vector3::from(planned.entry);
    let lateral = diff - p * p.dot(&diff);
    Ok(TrajectoryError { translation_mm: lateral.norm(), angle_deg: angle.to_degrees() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(ax: [f64; 3], ang: f64, t: [f64; 3]) -> RigidTransform {
        RigidTransform::from_axis_angle(&Vector3::from(ax), ang, Vector3::from(t))
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.rotation - b.rotation).norm() < tol && (a.translation - b.translation).norm() < tol
    }

    #[test]
    fn chain_examples() {
        let mut g = FrameGraph::new();
        for (p, c) in [("W", "H"), ("H", "A"), ("A", "S"), ("S", "I")] {
            g.set_static(p, c, RigidTransform::identity());
        }
        assert!(close(&chain_pose(&g, &["W", "H", "A", "S", "I"], 0.0).unwrap(), &RigidTransform::identity(), 1e-12));

        let ts = [
            tf([1.0, 0.0, 0.0], 0.3, [1.0, 2.0, 3.0]),
            tf([0.0, 1.0, 1.0], -1.1, [10.0, 0.0, -4.0]),
            tf([1.0, 1.0, 0.0], 2.0, [0.5, 0.5, 100.0]),
            tf([0.0, 0.0, 1.0], 0.7, [-7.0, 3.0, 2.0]),
        ];
        let names = ["W", "H", "A", "S", "I"];
        let mut g = FrameGraph::new();
        for (k, t) in ts.iter().enumerate() {
            g.set_static(names[k], names[k + 1], *t);
        }
        let direct = ts[0].to_homogeneous() * ts[1].to_homogeneous() * ts[2].to_homogeneous() * ts[3].to_homogeneous();
        let chained = chain_pose(&g, &names, 0.0).unwrap();
        assert!((chained.to_homogeneous() - direct).norm() < 1e-9);
        let back = chain_pose(&g, &["I", "S", "A", "H", "W"], 0.0).unwrap();
        assert!(close(&chained.compose(&back), &RigidTransform::identity(), 1e-9));

        let err = chain_pose(&g, &["W", "X"], 0.0).unwrap_err();
        assert_eq!(err, Error::PathNotFound { from: "W".into(), to: "X".into() });
    }

    #[test]
    fn timestamped_edges_use_latest_not_after() {
        let mut g = FrameGraph::new();
        g.set_edge("W", "T", Some(1.0), RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0)));
        g.set_edge("W", "T", Some(2.0), RigidTransform::from_translation(Vector3::new(2.0, 0.0, 0.0)));
        assert!(chain_pose(&g, &["W", "T"], 0.5).is_err());
        assert_eq!(chain_pose(&g, &["W", "T"], 1.5).unwrap().translation.x, 1.0);
        assert_eq!(chain_pose(&g, &["W", "T"], 9.0).unwrap().translation.x, 2.0);
    }

    #[test]
    fn display_registration_identity() {
        let i = RigidTransform::identity();
        assert!(close(&solve_display_registration(&i, &i, &i), &i, 1e-15));
    }

    #[test]
    fn pivot_tip_at_origin() {
        let pivot = Vector3::new(10.0, -5.0, 400.0);
        let poses: Vec<RigidTransform> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.5;
                let r = tf([a.cos(), a.sin(), 0.3], 0.2 + 0.05 * k as f64, [0.0; 3]);
                RigidTransform::new(r.rotation, pivot).unwrap()
            })
            .collect();
        let res = pivot_calibrate(&poses).unwrap();
        assert!(res.tip.norm() < 1e-9);
        assert!((res.pivot - pivot).norm() < 1e-9);
    }

    #[test]
    fn pivot_needs_rotation() {
        let poses = vec![RigidTransform::identity(); 5];
        assert!(matches!(pivot_calibrate(&poses), Err(Error::DegeneratePivot(_))));
        // all rotations about one axis leave the tip unobservable along it
        let poses: Vec<_> = (0..6).map(|k| tf([0.0, 0.0, 1.0], k as f64 * 0.3, [0.0; 3])).collect();
        assert!(matches!(pivot_calibrate(&poses), Err(Error::DegeneratePivot(_))));
    }

    #[test]
    fn trajectory_examples() {
        let plan = Trajectory { entry: [0.0, 0.0, 0.0], direction: [0.0, 0.0, 1.0] };
        let e = trajectory_error(&plan, &plan).unwrap();
        assert_eq!((e.translation_mm, e.angle_deg), (0.0, 0.0));
        let shifted = Trajectory { entry: [2.0, 0.0, 0.0], ..plan };
        let e = trajectory_error(&plan, &shifted).unwrap();
        assert!((e.translation_mm - 2.0).abs() < 1e-12 && e.angle_deg.abs() < 1e-12);
        let five = 5f64.to_radians();
        let tilted = Trajectory { entry: [0.0; 3], direction: [0.0, five.sin(), five.cos()] };
        let e = trajectory_error(&plan, &tilted).unwrap();
        assert!(e.translation_mm.abs() < 1e-12 && (e.angle_deg - 5.0).abs() < 1e-9);
        let bad = Trajectory { entry: [0.0; 3], direction: [0.0, 0.0, 2.0] };
        assert!(trajectory_error(&plan, &bad).is_err());
    }
}

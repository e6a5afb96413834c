//! Rigid tool definitions: building a canonical marker constellation from
//! repeated observations, checking that loaded tools can be told apart, and
//! the on-disk tool format.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rigid_register, Point3};
use crate::tracking::LengthTable;

/// Canonical marker layout of a rigid tool, centered on the marker centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolDefinition {
    name: String,
    markers: Vec<Point3>,
    marker_radius: f64,
    lengths: LengthTable,
}

impl ToolDefinition {
    /// Creates a definition; the markers are re-centered on their centroid.
    pub fn new(name: impl Into<String>, markers: Vec<Point3>, marker_radius: f64) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidArgument("tool name must not be empty".into()));
        }
        if markers.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "tool '{name}' needs at least 3 markers, got {}",
                markers.len()
            )));
        }
        if !(marker_radius >= 0.0 && marker_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad marker radius {marker_radius}")));
        }
        if markers.iter().any(|m| !m.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(format!("tool '{name}' has non-finite markers")));
        }
        let markers = center(&markers);
        let lengths = LengthTable::new(&markers);
        if lengths.pairs().any(|(_, _, l)| l <= 0.0) {
            return Err(Error::DegenerateGeometry(format!("tool '{name}' has coincident markers")));
        }
        Ok(Self { name, markers, marker_radius, lengths })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn markers(&self) -> &[Point3] {
        &self.markers
    }

    pub fn marker_count(&self) -> usize {
        self.markers.len()
    }

    pub fn marker_radius(&self) -> f64 {
        self.marker_radius
    }

    pub fn lengths(&self) -> &LengthTable {
        &self.lengths
    }

    /// Same layout under another name.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self { name: name.into(), ..self.clone() }
    }
}

fn center(points: &[Point3]) -> Vec<Point3> {
    let c = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / points.len() as f64;
    points.iter().map(|p| Point3::from(p.coords - c)).collect()
}

/// JSON layout of a tool file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolFile {
    pub name: String,
    pub marker_radius_mm: f64,
    pub markers_mm: Vec<[f64; 3]>,
    /// Optional stored length table; verified against the markers when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_mm: Option<Vec<Vec<f64>>>,
}

impl From<&ToolDefinition> for ToolFile {
    fn from(t: &ToolDefinition) -> Self {
        ToolFile {
            name: t.name.clone(),
            marker_radius_mm: t.marker_radius,
            markers_mm: t.markers.iter().map(|p| [p.x, p.y, p.z]).collect(),
            pairwise_mm: None,
        }
    }
}

impl TryFrom<ToolFile> for ToolDefinition {
    type Error = Error;

    fn try_from(f: ToolFile) -> Result<Self> {
        let markers = f.markers_mm.iter().map(|m| Point3::new(m[0], m[1], m[2])).collect();
        let tool = ToolDefinition::new(f.name, markers, f.marker_radius_mm)?;
        if let Some(stored) = f.pairwise_mm {
            let n = tool.marker_count();
            if stored.len() != n || stored.iter().any(|row| row.len() != n) {
                return Err(Error::Format(format!(
                    "tool '{}': pairwise table is not {n}x{n}",
                    tool.name
                )));
            }
            for (i, row) in stored.iter().enumerate() {
                for (j, &l) in row.iter().enumerate() {
                    // files round to 9 significant digits
                    let expect = tool.lengths.get(i, j);
                    if (l - expect).abs() > 1e-6 * expect.max(1.0) {
                        return Err(Error::Format(format!(
                            "tool '{}': stored length ({i},{j}) = {l} disagrees with markers ({expect})",
                            tool.name
                        )));
                    }
                }
            }
        }
        Ok(tool)
    }
}

impl Serialize for ToolDefinition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ToolFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ToolDefinition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ToolFile::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// RMS distance between corresponding markers of two observations.
pub fn shape_distance(p: &[Point3], q: &[Point3]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "marker count mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p.iter().zip(q).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok((sum / p.len() as f64).sqrt())
}

/// Frames collected while a tool is held in view, before definition.
#[derive(Debug, Clone)]
pub struct DefinitionSession {
    frames: Vec<Vec<Point3>>,
    t_side: f64,
    rejected: usize,
}

impl DefinitionSession {
    /// Starts a session; the first frame fixes the marker count and order.
    pub fn new(reference: Vec<Point3>, t_side: f64) -> Result<Self> {
        if reference.len() < 3 {
            return Err(Error::InvalidArgument("reference frame needs >= 3 markers".into()));
        }
        if !(t_side > 0.0) {
            return Err(Error::InvalidArgument(format!("t_side must be positive, got {t_side}")));
        }
        Ok(Self { frames: vec![reference], t_side, rejected: 0 })
    }

    pub fn reference(&self) -> &[Point3] {
        &self.frames[0]
    }

    pub fn frames(&self) -> &[Vec<Point3>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn t_side(&self) -> f64 {
        self.t_side
    }

    /// Admission tolerance on any pairwise length, 3 t_side.
    pub fn admission_tolerance(&self) -> f64 {
        3.0 * self.t_side
    }

    /// Adds a frame if it has the reference marker count and its sorted
    /// pairwise lengths agree with the reference's. Returns whether it was kept.
    pub fn push(&mut self, frame: Vec<Point3>) -> bool {
        let ok = frame.len() == self.reference().len() && {
            let a = LengthTable::new(self.reference()).sorted();
            let b = LengthTable::new(&frame).sorted();
            a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= self.admission_tolerance())
        };
        if ok {
            self.frames.push(frame);
        } else {
            self.rejected += 1;
        }
        ok
    }
}

/// Reorders every frame's markers to the reference ordering.
///
/// For each frame, all orderings whose pairwise lengths agree with the
/// reference within the admission tolerance are aligned rigidly to the
/// reference; the best alignment then assigns each reference slot its nearest
/// observed marker.
pub fn correspond_frames(session: &DefinitionSession) -> Result<DefinitionSession> {
    let reference = session.reference();
    let ref_lengths = LengthTable::new(reference);
    let tol = session.admission_tolerance();
    let mut out = Vec::with_capacity(session.frames.len());
    for (fi, frame) in session.frames.iter().enumerate() {
        if frame.len() != reference.len() {
            return Err(Error::InvalidArgument(format!(
                "frame {fi} has {} markers, reference has {}",
                frame.len(),
                reference.len()
            )));
        }
        let frame_lengths = LengthTable::new(frame);
        let mut best: Option<(f64, crate::geometry::RigidTransform)> = None;
        for perm in length_consistent_orderings(&ref_lengths, &frame_lengths, tol) {
            let ordered: Vec<Point3> = perm.iter().map(|&k| frame[k]).collect();
            if let Ok(reg) = rigid_register(reference, &ordered) {
                if best.as_ref().is_none_or(|(rmse, _)| reg.rmse < *rmse) {
                    best = Some((reg.rmse, reg.transform));
                }
            }
        }
        let (_, transform) = best.ok_or_else(|| {
            Error::InvalidArgument(format!("frame {fi} does not match the reference shape"))
        })?;

        let mut taken = vec![false; frame.len()];
        let mut ordered = Vec::with_capacity(frame.len());
        for (slot, r) in reference.iter().enumerate() {
            let predicted = transform.apply(r);
            let near: Vec<usize> = (0..frame.len())
                .filter(|&k| (frame[k] - predicted).norm() < session.t_side)
                .collect();
            if near.len() > 1 {
                return Err(Error::AmbiguousCorrespondence { frame: fi, slot });
            }
            let k = (0..frame.len())
                .min_by(|&a, &b| {
                    (frame[a] - predicted).norm().total_cmp(&(frame[b] - predicted).norm())
                })
                .expect("non-empty frame");
            if taken[k] {
                return Err(Error::AmbiguousCorrespondence { frame: fi, slot });
            }
            taken[k] = true;
            ordered.push(frame[k]);
        }
        out.push(ordered);
    }
    Ok(DefinitionSession { frames: out, t_side: session.t_side, rejected: session.rejected })
}

/// All orderings `perm` (perm[slot] = frame index) whose lengths match the
/// reference within `tol`.
fn length_consistent_orderings(
    reference: &LengthTable,
    frame: &LengthTable,
    tol: f64,
) -> Vec<Vec<usize>> {
    fn dfs(
        slot: usize,
        reference: &LengthTable,
        frame: &LengthTable,
        tol: f64,
        perm: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let n = reference.len();
        if slot == n {
            out.push(perm.clone());
            return;
        }
        for k in 0..n {
            if used[k] {
                continue;
            }
            let fits = (0..slot)
                .all(|s| (reference.get(s, slot) - frame.get(perm[s], k)).abs() <= tol);
            if fits {
                used[k] = true;
                perm.push(k);
                dfs(slot + 1, reference, frame, tol, perm, used, out);
                perm.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut used = vec![false; reference.len()];
    dfs(0, reference, frame, tol, &mut Vec::new(), &mut used, &mut out);
    out
}

/// Diagnostics from [`define_tool_with_report`].
#[derive(Debug, Clone)]
pub struct DefinitionReport {
    pub iterations: usize,
    /// Mean per-frame RMS distance to the shape after each iteration.
    pub objective: Vec<f64>,
    pub final_change_mm: f64,
}

pub const MIN_DEFINITION_FRAMES: usize = 10;
const MAX_ITERATIONS: usize = 100;
const CONVERGENCE_MM: f64 = 1e-6;

pub fn define_tool(session: &DefinitionSession, name: &str, marker_radius: f64) -> Result<ToolDefinition> {
    define_tool_with_report(session, name, marker_radius).map(|(t, _)| t)
}

/// Estimates the tool shape minimising the mean per-frame RMS marker distance,
/// with every frame rigidly aligned to the current estimate.
///
/// Each iteration aligns all frames to the shape and then moves the shape to
/// the weighted mean of the aligned frames (weights 1/RMS, i.e. a Weiszfeld
/// step on the sum of distances). Both steps can only lower the objective.
/// The frames must already be in corresponding order.
pub fn define_tool_with_report(
    session: &DefinitionSession,
    name: &str,
    marker_radius: f64,
) -> Result<(ToolDefinition, DefinitionReport)> {
    let frames = &session.frames;
    if frames.len() < MIN_DEFINITION_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DEFINITION_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    let n = frames[0].len();
    if frames.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument("frames have differing marker counts".into()));
    }

    // Start from the plain Procrustes mean so no frame sits exactly on the
    // estimate, where a 1/d weight would blow up.
    let first = center(&frames[0]);
    let mut start = vec![Vector3::zeros(); n];
    for f in frames {
        let reg = rigid_register(f, &first)?;
        for (acc, p) in start.iter_mut().zip(f) {
            *acc += reg.transform.apply(p).coords / frames.len() as f64;
        }
    }
    let mut shape = center(&start.into_iter().map(Point3::from).collect::<Vec<_>>());
    let mut objective = Vec::new();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut aligned = Vec::with_capacity(frames.len());
        let mut dists = Vec::with_capacity(frames.len());
        for f in frames {
            let reg = rigid_register(f, &shape)?;
            let a: Vec<Point3> = f.iter().map(|p| reg.transform.apply(p)).collect();
            dists.push(shape_distance(&a, &shape)?);
            aligned.push(a);
        }
        let mut sorted = dists.clone();
        sorted.sort_by(f64::total_cmp);
        let floor = (1e-3 * sorted[sorted.len() / 2]).max(1e-12);
        let mut next = vec![Vector3::zeros(); n];
        let mut wsum = 0.0;
        for (a, d) in aligned.iter().zip(&dists) {
            let w = 1.0 / d.max(floor);
            wsum += w;
            for (acc, p) in next.iter_mut().zip(a) {
                *acc += p.coords * w;
            }
        }
        let next: Vec<Point3> = center(&next.iter().map(|v| Point3::from(v / wsum)).collect::<Vec<_>>());
        change = shape_distance(&next, &shape)?;
        shape = next;
        objective.push(mean_distance(frames, &shape)?);
        if change < CONVERGENCE_MM {
            break;
        }
    }
    if !(change < CONVERGENCE_MM) {
        return Err(Error::DefinitionFailed {
            reason: format!("shape still moving after {MAX_ITERATIONS} iterations"),
            residual_mm: objective.last().copied().unwrap_or(f64::NAN),
        });
    }
    let shape = principal_axes(&shape);
    let tool = ToolDefinition::new(name, shape, marker_radius)?;
    Ok((tool, DefinitionReport { iterations, objective, final_change_mm: change }))
}

/// Mean over frames of the RMS marker distance after optimal alignment.
pub fn mean_distance(frames: &[Vec<Point3>], shape: &[Point3]) -> Result<f64> {
    let mut total = 0.0;
    for f in frames {
        total += rigid_register(shape, f)?.rmse;
    }
    Ok(total / frames.len() as f64)
}

/// Rotates a centered shape so its inertia axes line up with x, y, z
/// (largest spread first), with signs fixed by the third moment.
fn principal_axes(shape: &[Point3]) -> Vec<Point3> {
    let cov = shape.iter().fold(Matrix3::zeros(), |acc, p| acc + p.coords * p.coords.transpose());
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes: Vec<Vector3<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).into()).collect();
    for axis in axes.iter_mut().take(2) {
        let skew: f64 = shape.iter().map(|p| p.coords.dot(axis).powi(3)).sum();
        let tie_break = shape.iter().map(|p| p.coords.dot(axis)).find(|c| c.abs() > 1e-9).unwrap_or(1.0);
        let sign = if skew.abs() > 1e-9 { skew.signum() } else { tie_break.signum() };
        *axis *= sign;
    }
    axes[2] = axes[0].cross(&axes[1]);
    let basis = Matrix3::from_columns(&axes);
    shape.iter().map(|p| Point3::from(basis.transpose() * p.coords)).collect()
}

/// Outcome of [`validate_distinctness`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DistinctnessReport {
    /// Tools with two pairwise lengths closer than 2 t_side.
    pub self_ambiguous: Vec<SelfAmbiguity>,
    /// Tool pairs whose sorted length lists agree elementwise within 2 t_side.
    pub cross_confusable: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfAmbiguity {
    pub tool: String,
    pub lengths_mm: (f64, f64),
}

impl DistinctnessReport {
    pub fn is_clean(&self) -> bool {
        self.self_ambiguous.is_empty() && self.cross_confusable.is_empty()
    }
}

/// Flags tools that the matcher could confuse with themselves or each other.
pub fn validate_distinctness(tools: &[ToolDefinition], t_side: f64) -> Result<DistinctnessReport> {
    if !(t_side > 0.0) {
        return Err(Error::InvalidArgument(format!("t_side must be positive, got {t_side}")));
    }
    let gap = 2.0 * t_side;
    let mut report = DistinctnessReport::default();
    let sorted: Vec<Vec<f64>> = tools.iter().map(|t| t.lengths.sorted()).collect();
    for (tool, lengths) in tools.iter().zip(&sorted) {
        if let Some(w) = lengths.windows(2).find(|w| w[1] - w[0] < gap) {
            report.self_ambiguous.push(SelfAmbiguity {
                tool: tool.name.clone(),
                lengths_mm: (w[0], w[1]),
            });
        }
    }
    for i in 0..tools.len() {
        for j in i + 1..tools.len() {
            if sorted[i].len() == sorted[j].len()
                && sorted[i].iter().zip(&sorted[j]).all(|(a, b)| (a - b).abs() < gap)
            {
                report.cross_confusable.push((tools[i].name.clone(), tools[j].name.clone()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scalene() -> Vec<Point3> {
        vec![
            Point3::new(82.0, 85.0, 0.0),
            Point3::new(43.0, 19.0, 0.0),
            Point3::new(0.0, 48.0, 0.0),
            Point3::new(103.0, 49.0, 4.0),
        ]
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        RigidTransform::from_axis_angle(
            &axis,
            rng.random_range(0.0..3.0),
            Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(300.0..700.0)),
        )
    }

    #[test]
    fn shape_distance_examples() {
        let p = scalene();
        assert_eq!(shape_distance(&p, &p).unwrap(), 0.0);
        let mut q = p.clone();
        q[2].x += 2.0;
        assert!((shape_distance(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        let t = RigidTransform::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.4, Vector3::new(5.0, 6.0, 7.0));
        let tp: Vec<_> = p.iter().map(|x| t.apply(x)).collect();
        let tq: Vec<_> = q.iter().map(|x| t.apply(x)).collect();
        assert!((shape_distance(&tp, &tq).unwrap() - 1.0).abs() < 1e-12);
        assert!(shape_distance(&p, &q[..3]).is_err());
    }

    #[test]
    fn tool_is_centered() {
        let tool = ToolDefinition::new("t", scalene(), 5.75).unwrap();
        let sum = tool.markers().iter().fold(Vector3::zeros(), |a, p| a + p.coords);
        assert!(sum.norm() < 1e-9);
        assert!(ToolDefinition::new("t", scalene()[..2].to_vec(), 1.0).is_err());
    }

    #[test]
    fn correspondence_restores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = scalene();
        let mut session = DefinitionSession::new(reference.clone(), 1.0).unwrap();
        let mut reversed = reference.clone();
        reversed.reverse();
        assert!(session.push(reversed));
        let pose = random_pose(&mut rng);
        let shuffled = vec![reference[2], reference[0], reference[3], reference[1]];
        assert!(session.push(shuffled.iter().map(|p| pose.apply(p)).collect()));

        let out = correspond_frames(&session).unwrap();
        assert_eq!(out.frames()[0], reference);
        assert_eq!(out.frames()[1], reference);
        let reg = rigid_register(&reference, &out.frames()[2]).unwrap();
        assert!(reg.rmse < 1e-9);
    }

    #[test]
    fn correspondence_already_ordered_is_unchanged() {
        let reference = scalene();
        let mut session = DefinitionSession::new(reference.clone(), 1.0).unwrap();
        for _ in 0..3 {
            session.push(reference.clone());
        }
        let out = correspond_frames(&session).unwrap();
        assert!(out.frames().iter().all(|f| *f == reference));
    }

    #[test]
    fn correspondence_detects_ambiguity() {
        // two markers 0.5 mm apart cannot be told apart at t_side = 1
        let reference = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(60.0, 0.0, 0.0),
            Point3::new(0.0, 40.0, 0.0),
            Point3::new(0.5, 0.0, 0.0),
        ];
        let mut session = DefinitionSession::new(reference.clone(), 1.0).unwrap();
        session.push(reference);
        assert!(matches!(
            correspond_frames(&session),
            Err(Error::AmbiguousCorrespondence { .. })
        ));
    }

    #[test]
    fn session_rejects_misdetections() {
        let reference = scalene();
        let mut session = DefinitionSession::new(reference.clone(), 1.0).unwrap();
        let mut bad = reference.clone();
        bad[1].x += 10.0;
        assert!(!session.push(bad));
        assert!(!session.push(reference[..3].to_vec()));
        assert_eq!(session.rejected(), 2);
        assert_eq!(session.len(), 1);
    }

    #[test]
    fn identical_frames_converge_immediately() {
        let frames = vec![scalene(); 12];
        let session = DefinitionSession { frames, t_side: 1.0, rejected: 0 };
        let (tool, report) = define_tool_with_report(&session, "t", 5.75).unwrap();
        assert!(report.iterations <= 2);
        let reg = rigid_register(tool.markers(), &center(&scalene())).unwrap();
        assert!(reg.rmse < 1e-9);
    }

    #[test]
    fn too_few_frames() {
        let session = DefinitionSession { frames: vec![scalene(); 9], t_side: 1.0, rejected: 0 };
        assert!(define_tool(&session, "t", 1.0).is_err());
    }

    #[test]
    fn rigid_copies_recover_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames: Vec<Vec<Point3>> = (0..20)
            .map(|_| {
                let pose = random_pose(&mut rng);
                scalene().iter().map(|p| pose.apply(p)).collect()
            })
            .collect();
        let session = DefinitionSession { frames, t_side: 1.0, rejected: 0 };
        let tool = define_tool(&session, "t", 5.75).unwrap();
        let reg = rigid_register(tool.markers(), &scalene()).unwrap();
        assert!(reg.rmse < 1e-6, "rmse {}", reg.rmse);
    }

    #[test]
    fn noisy_frames_average_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let frames: Vec<Vec<Point3>> = (0..100)
            .map(|_| {
                let pose = random_pose(&mut rng);
                scalene()
                    .iter()
                    .map(|p| {
                        let q = pose.apply(p);
                        Point3::new(
                            q.x + noise.sample(&mut rng),
                            q.y + noise.sample(&mut rng),
                            q.z + noise.sample(&mut rng),
                        )
                    })
                    .collect()
            })
            .collect();
        let session = DefinitionSession { frames, t_side: 1.0, rejected: 0 };
        let (tool, report) = define_tool_with_report(&session, "t", 5.75).unwrap();
        for w in report.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {:?}", w);
        }
        let truth = center(&scalene());
        let reg = rigid_register(&truth, tool.markers()).unwrap();
        for (t, m) in truth.iter().zip(tool.markers()) {
            let e = (reg.transform.apply(t) - m).norm();
            assert!(e < 0.1, "marker error {e}");
        }
    }

    #[test]
    fn distinctness_flags() {
        let square = ToolDefinition::new(
            "square",
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(50.0, 0.0, 0.0),
                Point3::new(50.0, 50.0, 0.0),
                Point3::new(0.0, 50.0, 0.0),
            ],
            5.0,
        )
        .unwrap();
        let report = validate_distinctness(std::slice::from_ref(&square), 1.0).unwrap();
        assert_eq!(report.self_ambiguous.len(), 1);

        let a = ToolDefinition::new("a", scalene(), 5.0).unwrap();
        let sorted = a.lengths().sorted();
        assert!(sorted.windows(2).all(|w| w[1] - w[0] >= 5.0), "{sorted:?}");
        assert!(validate_distinctness(std::slice::from_ref(&a), 1.0).unwrap().is_clean());

        let b = a.renamed("b");
        let report = validate_distinctness(&[a, b], 1.0).unwrap();
        assert_eq!(report.cross_confusable, vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn tool_file_round_trip_and_verification() {
        let tool = ToolDefinition::new("probe", scalene(), 5.75).unwrap();
        let json = serde_json::to_string(&tool).unwrap();
        let back: ToolDefinition = serde_json::from_str(&json).unwrap();
        assert_eq!(back.name(), "probe");
        assert!(shape_distance(back.markers(), tool.markers()).unwrap() < 1e-12);

        let mut file = ToolFile::from(&tool);
        let mut table: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| tool.lengths().get(i, j)).collect()).collect();
        file.pairwise_mm = Some(table.clone());
        assert!(ToolDefinition::try_from(file.clone()).is_ok());
        table[0][1] += 1.0;
        file.pairwise_mm = Some(table);
        assert!(matches!(ToolDefinition::try_from(file), Err(Error::Format(_))));
    }
}

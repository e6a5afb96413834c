//! Multi-tool recognition and pose estimation.
//!
//! Per frame: gating thresholds are derived from the depth noise at the
//! frame's median marker depth, every loaded tool is matched against the
//! detections with a depth-first search over pairwise distances, overlapping
//! solutions are resolved greedily by loss, and the survivors are turned into
//! poses after their marker depths pass through per-marker Kalman filters.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detection::DetectedMarker;
use crate::error::Result;
use crate::geometry::{rigid_register, Point3, RigidTransform};
use crate::par::{map_slice, Parallelism};
use crate::registry::ToolDefinition;
use crate::sensor::NoiseModel;

/// Symmetric table of Euclidean distances between points.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthTable {
    n: usize,
    data: Vec<f64>,
}

impl LengthTable {
    pub fn new(points: &[Point3]) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let l = (points[i] - points[j]).norm();
                data[i * n + j] = l;
                data[j * n + i] = l;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Upper-triangle entries `(i, j, length)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Upper-triangle lengths in ascending order.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs().map(|(_, _, l)| l).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Distance table of a point set.
pub fn pairwise_lengths(points: &[Point3]) -> LengthTable {
    LengthTable::new(points)
}

/// Tracker settings. Missing fields in a config file take their defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub noise: NoiseModel,
    /// Fixed per-side threshold (mm) replacing the noise-derived one.
    pub t_side_override: Option<f64>,
    /// Multiplier on the per-side standard error (2 gives ~95 %).
    pub confidence: f64,
    /// Frames a tool may go unmatched before its filters are reset.
    pub max_missed: u32,
    /// Kalman process noise per frame, mm².
    pub process_noise: f64,
    pub kalman: bool,
    /// How per-tool candidate search is spread within one frame.
    #[serde(skip, default = "sequential")]
    pub parallelism: Parallelism,
}

fn sequential() -> Parallelism {
    Parallelism::Sequential
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            t_side_override: None,
            confidence: 2.0,
            max_missed: 1,
            process_noise: 1.0,
            kalman: true,
            parallelism: Parallelism::Sequential,
        }
    }
}

/// Gating thresholds for one tool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t_side: f64,
    pub t_shape: f64,
    /// The anchor depth was outside the noise model's range and got clamped.
    pub clamped: bool,
}

/// Per-side and whole-shape thresholds for an `n_markers` tool observed at `depth`.
pub fn thresholds(model: &NoiseModel, depth: f64, n_markers: usize, cfg: &TrackerConfig) -> Thresholds {
    let (sigma_p, clamped) = model.sigma_clamped(depth);
    let t_side = match cfg.t_side_override {
        Some(t) => t,
        None => cfg.confidence * std::f64::consts::SQRT_2 * sigma_p,
    };
    let n = n_markers as f64;
    Thresholds { t_side, t_shape: t_side / (n * (n - 1.0)).sqrt(), clamped }
}

/// Strict gate; a zero threshold admits only exact agreement.
#[inline]
pub fn passes(value: f64, threshold: f64) -> bool {
    value < threshold || (threshold == 0.0 && value == 0.0)
}

/// Length mismatch of one side.
#[inline]
fn side_error(tool: &LengthTable, i: usize, j: usize, det: &LengthTable, a: usize, b: usize) -> f64 {
    (tool.get(i, j) - det.get(a, b)).abs()
}

/// Shape loss: sum of side mismatches over `i < j`, divided by `N (N - 1)`.
pub fn match_loss(tool: &ToolDefinition, candidate: &[Point3]) -> f64 {
    let lengths = LengthTable::new(candidate);
    let identity: Vec<usize> = (0..candidate.len()).collect();
    loss_for_assignment(tool.lengths(), &lengths, &identity)
}

fn loss_for_assignment(tool: &LengthTable, det: &LengthTable, assignment: &[usize]) -> f64 {
    let n = assignment.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += side_error(tool, i, j, det, assignment[i], assignment[j]);
        }
    }
    sum / (n * (n - 1)) as f64
}

/// One way of explaining a subset of detections as a tool.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    /// Index into the tool list the candidate was searched against.
    pub tool: usize,
    /// `assignment[slot]` = detection index for that tool marker.
    pub assignment: Vec<usize>,
    pub loss: f64,
}

impl MatchCandidate {
    fn detection_set(&self) -> Vec<usize> {
        let mut s = self.assignment.clone();
        s.sort_unstable();
        s
    }
}

/// Every ordered assignment of distinct detections to the tool's marker slots
/// with all side errors below `t_side` and loss below `t_shape`, sorted by
/// assignment.
pub fn find_candidates(
    tool: &ToolDefinition,
    detections: &[Point3],
    t_side: f64,
    t_shape: f64,
) -> Vec<MatchCandidate> {
    let det = LengthTable::new(detections);
    search(0, tool, &det, t_side, t_shape)
}

/// Slot visiting order: longest total incident length first, which prunes
/// the search tree earliest.
fn slot_order(lengths: &LengthTable) -> Vec<usize> {
    let n = lengths.len();
    let mut order: Vec<usize> = (0..n).collect();
    let weight = |i: usize| (0..n).map(|j| lengths.get(i, j)).sum::<f64>();
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
    order
}

fn search(
    tool_index: usize,
    tool: &ToolDefinition,
    det: &LengthTable,
    t_side: f64,
    t_shape: f64,
) -> Vec<MatchCandidate> {
    let n = tool.marker_count();
    let m = det.len();
    let mut out = Vec::new();
    if m < n {
        return out;
    }
    let order = slot_order(tool.lengths());
    let mut assignment = vec![usize::MAX; n];
    let mut used = vec![false; m];

    struct Ctx<'a> {
        tool: &'a LengthTable,
        det: &'a LengthTable,
        order: &'a [usize],
        t_side: f64,
        t_shape: f64,
        tool_index: usize,
    }

    fn dfs(
        depth: usize,
        ctx: &Ctx<'_>,
        assignment: &mut [usize],
        used: &mut [bool],
        out: &mut Vec<MatchCandidate>,
    ) {
        let n = ctx.order.len();
        if depth == n {
            let loss = loss_for_assignment(ctx.tool, ctx.det, assignment);
            if passes(loss, ctx.t_shape) {
                out.push(MatchCandidate {
                    tool: ctx.tool_index,
                    assignment: assignment.to_vec(),
                    loss,
                });
            }
            return;
        }
        let slot = ctx.order[depth];
        for d in 0..ctx.det.len() {
            if used[d] {
                continue;
            }
            let fits = ctx.order[..depth].iter().all(|&prev| {
                let (i, j, a, b) = if prev < slot {
                    (prev, slot, assignment[prev], d)
                } else {
                    (slot, prev, d, assignment[prev])
                };
                passes(side_error(ctx.tool, i, j, ctx.det, a, b), ctx.t_side)
            });
            if !fits {
                continue;
            }
            used[d] = true;
            assignment[slot] = d;
            dfs(depth + 1, ctx, assignment, used, out);
            assignment[slot] = usize::MAX;
            used[d] = false;
        }
    }

    let ctx = Ctx { tool: tool.lengths(), det, order: &order, t_side, t_shape, tool_index };
    dfs(0, &ctx, &mut assignment, &mut used, &mut out);
    out.sort_by(|a, b| a.assignment.cmp(&b.assignment));
    out
}

fn candidate_order(a: &MatchCandidate, b: &MatchCandidate, tools: &[ToolDefinition]) -> Ordering {
    a.loss
        .total_cmp(&b.loss)
        .then_with(|| tools[a.tool].name().cmp(tools[b.tool].name()))
        .then_with(|| a.detection_set().cmp(&b.detection_set()))
        .then_with(|| a.assignment.cmp(&b.assignment))
}

/// Removes redundant solutions: first, per tool and detection set, only the
/// lowest-loss ordering survives; then candidates are accepted in ascending
/// loss as long as they neither reuse a detection nor repeat a tool.
pub fn resolve(candidates: &[MatchCandidate], tools: &[ToolDefinition]) -> Vec<MatchCandidate> {
    let mut best: Vec<MatchCandidate> = Vec::new();
    let mut sorted: Vec<&MatchCandidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| candidate_order(a, b, tools));
    for c in sorted {
        let set = c.detection_set();
        // sorted ascending, so the first seen per (tool, set) is the minimum
        if !best.iter().any(|b| b.tool == c.tool && b.detection_set() == set) {
            best.push(c.clone());
        }
    }

    let mut accepted: Vec<MatchCandidate> = Vec::new();
    let mut used_detections: Vec<usize> = Vec::new();
    for c in best {
        if accepted.iter().any(|a| a.tool == c.tool) {
            continue;
        }
        if c.assignment.iter().any(|d| used_detections.contains(d)) {
            continue;
        }
        used_detections.extend(&c.assignment);
        accepted.push(c);
        if accepted.len() == tools.len() {
            break;
        }
    }
    accepted
}

/// Tool-to-camera transform from matched marker positions.
pub fn estimate_pose(tool: &ToolDefinition, assigned: &[Point3]) -> Result<RigidTransform> {
    Ok(rigid_register(tool.markers(), assigned)?.transform)
}

/// Scalar random-walk Kalman filter on one marker's depth.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DepthFilter {
    pub estimate: f64,
    pub variance: f64,
    pub initialized: bool,
}

impl DepthFilter {
    pub fn update(&mut self, measurement: f64, sigma_meas: f64, process_noise: f64) -> f64 {
        let r = sigma_meas * sigma_meas;
        if !self.initialized {
            *self = DepthFilter { estimate: measurement, variance: r, initialized: true };
            return measurement;
        }
        let predicted = self.variance + process_noise;
        let gain = predicted / (predicted + r);
        self.estimate += gain * (measurement - self.estimate);
        self.variance = (1.0 - gain) * predicted;
        self.estimate
    }
}

/// Independent depth filters for every (tool, marker) pair.
#[derive(Debug, Clone)]
pub struct DepthFilterBank {
    filters: Vec<Vec<DepthFilter>>,
    process_noise: f64,
}

impl DepthFilterBank {
    pub fn new(marker_counts: &[usize], process_noise: f64) -> Self {
        Self {
            filters: marker_counts.iter().map(|&n| vec![DepthFilter::default(); n]).collect(),
            process_noise,
        }
    }

    pub fn filter(&self, tool: usize, marker: usize) -> &DepthFilter {
        &self.filters[tool][marker]
    }

    pub fn reset_tool(&mut self, tool: usize) {
        self.filters[tool].iter_mut().for_each(|f| *f = DepthFilter::default());
    }

    pub fn reset(&mut self) {
        for t in 0..self.filters.len() {
            self.reset_tool(t);
        }
    }
}

/// Feeds one depth measurement through its filter and returns the estimate.
pub fn kalman_update(
    bank: &mut DepthFilterBank,
    tool: usize,
    marker: usize,
    measured_depth: f64,
    sigma_meas: f64,
) -> f64 {
    let q = bank.process_noise;
    bank.filters[tool][marker].update(measured_depth, sigma_meas, q)
}

/// A tool found in a frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolObservation {
    pub tool: String,
    /// Tool-to-camera transform.
    pub pose: RigidTransform,
    pub loss: f64,
    /// Surface depth of each marker after filtering, in tool marker order.
    pub marker_depths: Vec<f64>,
    pub timestamp: f64,
}

/// Per-session tracking state: loaded tools, filters and miss counters.
#[derive(Debug, Clone)]
pub struct Tracker {
    tools: Vec<ToolDefinition>,
    cfg: TrackerConfig,
    bank: DepthFilterBank,
    missed: Vec<u32>,
}

/// Quantization variance of integer-millimetre depth, mm².
pub const QUANTIZATION_VARIANCE: f64 = 1.0 / 12.0;

impl Tracker {
    pub fn new(tools: Vec<ToolDefinition>, cfg: TrackerConfig) -> Self {
        let counts: Vec<usize> = tools.iter().map(|t| t.marker_count()).collect();
        let bank = DepthFilterBank::new(&counts, cfg.process_noise);
        let missed = vec![0; tools.len()];
        Self { tools, cfg, bank, missed }
    }

    pub fn tools(&self) -> &[ToolDefinition] {
        &self.tools
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn bank(&self) -> &DepthFilterBank {
        &self.bank
    }

    /// Matches and localises every loaded tool in one frame's detections.
    /// Tools that are not found are simply absent from the output.
    pub fn track_frame(&mut self, detections: &[DetectedMarker], timestamp: f64) -> Vec<ToolObservation> {
        let accepted = self.match_frame(detections);
        let mut found = vec![false; self.tools.len()];
        let mut out = Vec::with_capacity(accepted.len());
        for cand in &accepted {
            found[cand.tool] = true;
            if let Some(obs) = self.localize(cand, detections, timestamp) {
                out.push(obs);
            }
        }
        for (t, hit) in found.iter().enumerate() {
            if *hit {
                self.missed[t] = 0;
            } else {
                self.missed[t] = self.missed[t].saturating_add(1);
                if self.missed[t] > self.cfg.max_missed {
                    self.bank.reset_tool(t);
                }
            }
        }
        out.sort_by(|a, b| a.tool.cmp(&b.tool));
        out
    }

    /// Candidate search and resolution without touching filter state.
    pub fn match_frame(&self, detections: &[DetectedMarker]) -> Vec<MatchCandidate> {
        if detections.is_empty() {
            return Vec::new();
        }
        let anchor = median(detections.iter().map(|d| d.mean_depth).collect());
        let positions: Vec<Point3> = detections.iter().map(|d| d.position).collect();
        let det = LengthTable::new(&positions);
        let indices: Vec<usize> = (0..self.tools.len()).collect();
        let per_tool = map_slice(&indices, self.cfg.parallelism, |&t| {
            let tool = &self.tools[t];
            let th = thresholds(&self.cfg.noise, anchor, tool.marker_count(), &self.cfg);
            search(t, tool, &det, th.t_side, th.t_shape)
        });
        let all: Vec<MatchCandidate> = per_tool.into_iter().flatten().collect();
        resolve(&all, &self.tools)
    }

    fn localize(
        &mut self,
        cand: &MatchCandidate,
        detections: &[DetectedMarker],
        timestamp: f64,
    ) -> Option<ToolObservation> {
        let tool = &self.tools[cand.tool];
        let r = tool.marker_radius();
        let mut points = Vec::with_capacity(cand.assignment.len());
        let mut depths = Vec::with_capacity(cand.assignment.len());
        for (slot, &d) in cand.assignment.iter().enumerate() {
            let det = &detections[d];
            let depth = if self.cfg.kalman {
                let (sigma_p, _) = self.cfg.noise.sigma_clamped(det.mean_depth);
                let sigma = (sigma_p * sigma_p + QUANTIZATION_VARIANCE).sqrt();
                kalman_update(&mut self.bank, cand.tool, slot, det.mean_depth, sigma)
            } else {
                det.mean_depth
            };
            // same ray, new depth; then out to the sphere center
            let ray = det.ray();
            points.push(Point3::from(ray * (depth + r)));
            depths.push(depth);
        }
        let pose = estimate_pose(tool, &points).ok()?;
        Some(ToolObservation {
            tool: tool.name().to_string(),
            pose,
            loss: cand.loss,
            marker_depths: depths,
            timestamp,
        })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use nalgebra::Vector3;

    #[test]
    fn length_table_examples() {
        let t = pairwise_lengths(&[Point3::new(0.0, 0.0, 0.0), Point3::new(6.0, 8.0, 0.0)]);
        assert_eq!(t.get(0, 1), 10.0);
        assert_eq!(t.get(1, 0), 10.0);
        assert_eq!(t.get(0, 0), 0.0);
        let h = 30.0 * 3f64.sqrt() / 2.0;
        let tri = pairwise_lengths(&[
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(30.0, 0.0, 0.0),
            Point3::new(15.0, h, 0.0),
        ]);
        assert!(tri.pairs().all(|(_, _, l)| (l - 30.0).abs() < 1e-12));
    }

    #[test]
    fn threshold_examples() {
        let cfg = TrackerConfig::default();
        let flat = NoiseModel::constant(0.5);
        let th = thresholds(&flat, 500.0, 4, &cfg);
        assert!((th.t_side - 2.0 * 2f64.sqrt() * 0.5).abs() < 1e-12);
        assert!((th.t_side - 1.4142).abs() < 1e-4);
        assert!((th.t_shape - 0.4082).abs() < 1e-4);
        assert_eq!(thresholds(&flat, 200.0, 4, &cfg), thresholds(&flat, 900.0, 4, &cfg));
        let zero = NoiseModel::constant(0.0);
        assert_eq!(thresholds(&zero, 500.0, 4, &cfg).t_side, 0.0);
        let th = thresholds(&NoiseModel::default(), 5000.0, 4, &cfg);
        assert!(th.clamped);
    }

    #[test]
    fn loss_normalization() {
        let tool = fixtures::standard_tools()[0].clone();
        let exact: Vec<Point3> = tool.markers().to_vec();
        assert_eq!(match_loss(&tool, &exact), 0.0);
        // one side off by delta, all others exact
        let delta = 0.6;
        let mut det = LengthTable::new(&exact);
        det.data[1] += delta;
        det.data[4] += delta;
        let loss = loss_for_assignment(tool.lengths(), &det, &[0, 1, 2, 3]);
        assert!((loss - delta / 12.0).abs() < 1e-12);
    }

    #[test]
    fn finds_tool_among_strays() {
        let tool = fixtures::standard_tools()[0].clone();
        let pose = RigidTransform::from_axis_angle(&Vector3::new(0.2, 1.0, 0.1), 0.5, Vector3::new(10.0, -20.0, 550.0));
        let mut pts: Vec<Point3> = tool.markers().iter().map(|p| pose.apply(p)).collect();
        pts.push(Point3::new(400.0, 300.0, 900.0));
        pts.push(Point3::new(-380.0, 250.0, 700.0));
        pts.push(Point3::new(-300.0, -350.0, 800.0));
        let cands = find_candidates(&tool, &pts, 1.0, 0.3);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].assignment, vec![0, 1, 2, 3]);
        assert!(cands[0].loss < 1e-9);
        let none = find_candidates(&tool, &pts[1..], 1.0, 0.3);
        assert!(none.is_empty());
    }

    #[test]
    fn resolve_rules() {
        let tools = fixtures::standard_tools();
        let c = |tool, assignment: Vec<usize>, loss| MatchCandidate { tool, assignment, loss };
        let out = resolve(&[c(0, vec![0, 1, 2, 3], 0.3), c(0, vec![1, 0, 2, 3], 0.1)], &tools);
        assert_eq!(out, vec![c(0, vec![1, 0, 2, 3], 0.1)]);

        let out = resolve(&[c(1, vec![4, 5, 6, 3], 0.2), c(0, vec![0, 1, 2, 3], 0.1)], &tools);
        assert_eq!(out, vec![c(0, vec![0, 1, 2, 3], 0.1)]);

        let disjoint = [
            c(2, vec![8, 9, 10, 11], 0.05),
            c(0, vec![0, 1, 2, 3], 0.3),
            c(1, vec![4, 5, 6, 7], 0.1),
        ];
        let out = resolve(&disjoint, &tools);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn kalman_two_step() {
        let mut bank = DepthFilterBank::new(&[1], 1.0);
        assert_eq!(kalman_update(&mut bank, 0, 0, 500.0, 1.0), 500.0);
        let est = kalman_update(&mut bank, 0, 0, 502.0, 1.0);
        assert!((est - (500.0 + 4.0 / 3.0)).abs() < 1e-12);
        assert!((bank.filter(0, 0).variance - 2.0 / 3.0).abs() < 1e-12);
        bank.reset();
        assert!(!bank.filter(0, 0).initialized);
    }

    #[test]
    fn kalman_constant_stream() {
        let mut bank = DepthFilterBank::new(&[2], 1.0);
        for _ in 0..20 {
            assert_eq!(kalman_update(&mut bank, 0, 1, 612.0, 0.7), 612.0);
        }
    }
}

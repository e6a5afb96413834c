//! score-trajectories.

use std::path::PathBuf;

use clap::Args;
use irtrack::format::Csv;
use irtrack::io::{read_json, read_json_lines};
use irtrack::nav::{chain_pose, trajectory_error, FrameGraph, Trajectory};
use irtrack::RigidTransform;
use serde::Deserialize;

use crate::output::{emit, emit_json, f, CliError, CliResult};
use crate::Global;

#[derive(Args)]
pub struct ScoreArgs {
    /// JSON {"planned": [...], "executed": [...]}; executed may be omitted
    /// when a pose log is given.
    #[arg(long = "in")]
    input: PathBuf,
    /// Tracker pose log (JSON lines) supplying executed trajectories.
    #[arg(long, requires = "graph")]
    poses: Option<PathBuf>,
    /// Static frame graph config used with the pose log.
    #[arg(long, requires = "poses")]
    graph: Option<PathBuf>,
    /// CSV report path; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Deserialize)]
struct TrajectoryFile {
    planned: Vec<Trajectory>,
    #[serde(default)]
    executed: Vec<Trajectory>,
}

#[derive(Deserialize)]
struct Edge {
    parent: String,
    child: String,
    transform: RigidTransform,
}

/// Frames from the planning frame down to the tracked tool; the pose log
/// fills the last hop (camera to tool), the listed edges the rest.
#[derive(Deserialize)]
struct GraphConfig {
    path: Vec<String>,
    edges: Vec<Edge>,
    /// Instrument axis in tool coordinates.
    tool_axis: Trajectory,
}

#[derive(Deserialize)]
struct PoseLine {
    tool: String,
    pose: RigidTransform,
    timestamp: f64,
}

pub fn score(_g: &Global, a: ScoreArgs) -> CliResult {
    let file: TrajectoryFile = read_json(&a.input)?;
    let mut executed: Vec<(Option<f64>, Trajectory)> = file.executed.iter().map(|t| (None, *t)).collect();
    if let (Some(poses), Some(graph)) = (&a.poses, &a.graph) {
        let cfg: GraphConfig = read_json(graph)?;
        if cfg.path.len() < 2 {
            return Err(CliError::input(format!("{}: path needs at least two frames", graph.display())));
        }
        let tool = cfg.path[cfg.path.len() - 1].clone();
        let camera = cfg.path[cfg.path.len() - 2].clone();
        let mut g = FrameGraph::new();
        for e in &cfg.edges {
            g.set_static(&e.parent, &e.child, e.transform);
        }
        let path: Vec<&str> = cfg.path.iter().map(String::as_str).collect();
        let lines: Vec<PoseLine> = read_json_lines(poses)?;
        for line in lines.iter().filter(|l| l.tool == tool) {
            g.set_edge(&camera, &tool, Some(line.timestamp), line.pose);
            let t = chain_pose(&g, &path, line.timestamp)?;
            executed.push((Some(line.timestamp), cfg.tool_axis.transformed(&t)));
        }
    }
    if file.planned.is_empty() {
        return Err(CliError::input(format!("{}: no planned trajectories", a.input.display())));
    }
    if file.planned.len() > 1 && file.planned.len() != executed.len() {
        return Err(CliError::input(format!(
            "{} planned trajectories but {} executed; give one plan or one per execution",
            file.planned.len(),
            executed.len()
        )));
    }
    let mut csv = Csv::new(&["index", "timestamp_s", "translation_mm", "angle_deg"]);
    let mut rows = Vec::new();
    for (k, (ts, exec)) in executed.iter().enumerate() {
        let plan = &file.planned[if file.planned.len() == 1 { 0 } else { k }];
        let err = trajectory_error(plan, exec)?;
        csv.row(&[k.to_string(), ts.map(f).unwrap_or_default(), f(err.translation_mm), f(err.angle_deg)]);
        rows.push(err);
    }
    emit(a.csv.as_deref(), &csv.finish())?;
    emit_json(a.json.as_deref(), &serde_json::json!({ "scored": rows.len(), "errors": rows }))
}

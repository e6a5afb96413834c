//! Reference tools and scenes shared by tests, benches, experiments and the
//! CLI.

use nalgebra::Vector3;

use crate::geometry::{Point3, RigidTransform};
use crate::registry::ToolDefinition;
use crate::sensor::{PlacedTool, SceneSpec, StrayMarker};

/// Radius of the 11.5 mm marker spheres.
pub const MARKER_RADIUS: f64 = 5.75;

const LAYOUTS: [[[f64; 2]; 4]; 5] = [
    [[82.0, 85.0], [43.0, 19.0], [0.0, 48.0], [103.0, 49.0]],
    [[30.0, 109.0], [75.0, 51.0], [98.0, 14.0], [2.0, 7.0]],
    [[108.0, 48.0], [83.0, 3.0], [42.0, 9.0], [13.0, 105.0]],
    [[50.0, 38.0], [106.0, 87.0], [76.0, 7.0], [17.0, 1.0]],
    [[29.0, 104.0], [2.0, 34.0], [57.0, 1.0], [110.0, 81.0]],
];

/// Five planar four-marker tools. Side lengths lie between 40 and 125 mm,
/// no tool has two sides within 9 mm of each other, and every pair of tools
/// differs by at least 20 mm in some sorted side length, so none of them can
/// be confused with another or with a relabelling of itself.
pub fn standard_tools() -> Vec<ToolDefinition> {
    LAYOUTS
        .iter()
        .enumerate()
        .map(|(k, layout)| {
            let markers = layout.iter().map(|&[x, y]| Point3::new(x, y, 0.0)).collect();
            let name = format!("tool_{}", (b'a' + k as u8) as char);
            ToolDefinition::new(name, markers, MARKER_RADIUS).expect("fixture tools are valid")
        })
        .collect()
}

/// Tool facing the camera, its center `depth` mm down the optical axis,
/// shifted laterally by `(x, y)`.
pub fn facing_pose(x: f64, y: f64, depth: f64) -> RigidTransform {
    RigidTransform::from_translation(Vector3::new(x, y, depth))
}

/// Tool tilted by `angle_deg` about an axis in the image plane.
pub fn tilted_pose(x: f64, y: f64, depth: f64, axis: Vector3<f64>, angle_deg: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(&axis, angle_deg.to_radians(), Vector3::new(x, y, depth))
}

pub fn scene_with(tools: &[(ToolDefinition, RigidTransform)]) -> SceneSpec {
    SceneSpec {
        tools: tools.iter().map(|(tool, pose)| PlacedTool { tool: tool.clone(), pose: *pose }).collect(),
        ..SceneSpec::default()
    }
}

/// The first `n` standard tools spread over a 3x2 grid at `depth` mm.
pub fn grid_scene(n: usize, depth: f64) -> SceneSpec {
    let tools = standard_tools();
    let slots = [(-130.0, -70.0), (0.0, -70.0), (130.0, -70.0), (-130.0, 80.0), (0.0, 80.0), (130.0, 80.0)];
    let placed: Vec<_> = tools
        .into_iter()
        .zip(slots)
        .take(n)
        .map(|(t, (x, y))| (t, facing_pose(x, y, depth)))
        .collect();
    scene_with(&placed)
}

/// Loose markers scattered on a ring around the optical axis at `depth` mm,
/// far enough from each other that they never form a tool.
pub fn ring_strays(count: usize, radius_mm: f64, depth: f64) -> Vec<StrayMarker> {
    (0..count)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
            // stagger depth so spacings are irregular
            let z = depth + 37.0 * ((k * 7) % 5) as f64;
            StrayMarker { center: [radius_mm * a.cos(), radius_mm * a.sin(), z], radius: MARKER_RADIUS }
        })
        .collect()
}

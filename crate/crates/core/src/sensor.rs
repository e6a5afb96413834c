//! Synthetic reflectivity + depth sensor.
//!
//! Frames contain spherical retro-reflective markers (tool constellations
//! and loose markers), flat high-reflectivity distractors such as monitors,
//! optional planar surfaces, and a dim background. Depth carries zero-mean
//! Gaussian noise whose standard deviation follows a quadratic in depth and
//! is rounded to whole millimetres like the real sensor's output.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, Pixel, Point3, RigidTransform};
use crate::registry::ToolDefinition;

/// Largest depth value the frame format can carry, mm.
pub const MAX_DEPTH_MM: f64 = 1200.0;

/// Depth noise `sigma(d) = a + b d + c d²` (mm) over a validity range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub valid_range: [f64; 2],
}

impl Default for NoiseModel {
    /// Assumed coefficients: about 0.45 mm at 500 mm and 1.4 mm at 971 mm.
    fn default() -> Self {
        Self { a: 0.05, b: 2e-4, c: 1.2e-6, valid_range: [156.0, 971.0] }
    }
}

impl NoiseModel {
    pub fn new(a: f64, b: f64, c: f64, valid_range: [f64; 2]) -> Result<Self> {
        let m = Self { a, b, c, valid_range };
        let [lo, hi] = valid_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad depth range [{lo}, {hi}]")));
        }
        // the quadratic's minimum over the range is at an end or its vertex
        let mut probes = vec![lo, hi];
        if c != 0.0 {
            let vertex = -b / (2.0 * c);
            if vertex > lo && vertex < hi {
                probes.push(vertex);
            }
        }
        if probes.iter().any(|&d| !(m.eval(d) > 0.0)) {
            return Err(Error::InvalidArgument("sigma must be positive over the range".into()));
        }
        Ok(m)
    }

    /// Depth-independent noise. `sigma = 0` gives a noiseless sensor.
    pub fn constant(sigma: f64) -> Self {
        Self { a: sigma.max(0.0), b: 0.0, c: 0.0, valid_range: [1.0, MAX_DEPTH_MM] }
    }

    pub fn noiseless() -> Self {
        Self::constant(0.0)
    }

    #[inline]
    fn eval(&self, d: f64) -> f64 {
        self.a + self.b * d + self.c * d * d
    }

    /// Standard error at depth `d`; errors outside the valid range.
    pub fn sigma(&self, d: f64) -> Result<f64> {
        let [lo, hi] = self.valid_range;
        if !(d >= lo && d <= hi) {
            return Err(Error::OutOfRange { value: d, min: lo, max: hi });
        }
        Ok(self.eval(d))
    }

    /// Standard error with `d` clamped into range; the flag reports clamping.
    pub fn sigma_clamped(&self, d: f64) -> (f64, bool) {
        let [lo, hi] = self.valid_range;
        let c = d.clamp(lo, hi);
        (self.eval(c), c != d || d.is_nan())
    }

    pub fn in_range(&self, d: f64) -> bool {
        d >= self.valid_range[0] && d <= self.valid_range[1]
    }
}

/// Free-standing `eval_sigma` form.
pub fn eval_sigma(model: &NoiseModel, d: f64) -> Result<f64> {
    model.sigma(d)
}

/// Expected image area (px²) of a marker of radius `r` at distance `d`.
pub fn marker_pixel_area(intr: &CameraIntrinsics, r: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    if r < 0.0 {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    Ok(std::f64::consts::PI * r * r / ((intr.sx / intr.fx) * (intr.sy / intr.fy) * d * d))
}

/// A tool placed in the scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacedTool {
    pub tool: ToolDefinition,
    /// Tool-to-camera transform.
    pub pose: RigidTransform,
}

/// A loose spherical marker.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StrayMarker {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Axis-aligned bright image rectangle (inclusive pixel bounds) on a
/// fronto-parallel plane at `depth_mm`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Distractor {
    pub u_min: usize,
    pub v_min: usize,
    pub u_max: usize,
    pub v_max: usize,
    pub depth_mm: f64,
    #[serde(default = "default_distractor_intensity")]
    pub intensity: u16,
}

fn default_distractor_intensity() -> u16 {
    900
}

/// Infinite plane `normal · p = offset` with a fixed reflectivity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlaneSurface {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(default = "default_plane_reflectivity")]
    pub reflectivity: u16,
}

fn default_plane_reflectivity() -> u16 {
    200
}

/// Everything a frame is rendered from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub tools: Vec<PlacedTool>,
    #[serde(default)]
    pub stray_markers: Vec<StrayMarker>,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
    #[serde(default)]
    pub planes: Vec<PlaneSurface>,
    #[serde(default = "default_background_max")]
    pub background_reflectivity_max: u16,
}

fn default_background_max() -> u16 {
    250
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            tools: Vec::new(),
            stray_markers: Vec::new(),
            distractors: Vec::new(),
            planes: Vec::new(),
            background_reflectivity_max: default_background_max(),
        }
    }
}

/// Brightness at a marker's center and rim. Kept well above the 500 band
/// floor so that rounding to whole intensity units barely moves the
/// centroid of small blobs.
pub const MARKER_PEAK: f64 = 30000.0;
pub const MARKER_RIM: f64 = 3000.0;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if f64::from(self.background_reflectivity_max) >= MARKER_RIM {
            return Err(Error::InvalidArgument(
                "background reflectivity must stay below the marker rim level".into(),
            ));
        }
        for d in &self.distractors {
            if d.u_min > d.u_max || d.v_min > d.v_max || !(d.depth_mm > 0.0) {
                return Err(Error::InvalidArgument("malformed distractor rectangle".into()));
            }
        }
        for p in &self.planes {
            if Vector3::from(p.normal).norm() == 0.0 {
                return Err(Error::InvalidArgument("plane normal must be non-zero".into()));
            }
        }
        Ok(())
    }

    /// Sphere centers and radii of every marker in the scene.
    pub fn spheres(&self) -> Vec<(Point3, f64)> {
        let mut out = Vec::new();
        for placed in &self.tools {
            for m in placed.tool.markers() {
                out.push((placed.pose.apply(m), placed.tool.marker_radius()));
            }
        }
        out.extend(self.stray_markers.iter().map(|s| (Point3::from(s.center), s.radius)));
        out
    }
}

/// Paired reflectivity and depth images.
///
/// Depth is ray distance in mm with 0 meaning invalid; frames rendered with
/// quantization hold whole numbers only.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub width: usize,
    pub height: usize,
    pub reflectivity: Vec<u16>,
    pub depth: Vec<f64>,
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
}

impl SensorFrame {
    pub fn blank(intr: &CameraIntrinsics, timestamp: f64) -> Self {
        let n = intr.width * intr.height;
        Self {
            width: intr.width,
            height: intr.height,
            reflectivity: vec![0; n],
            depth: vec![0.0; n],
            timestamp,
            intrinsics: *intr,
        }
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }
}

/// Knobs for [`render_frame_with`].
#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub timestamp: f64,
    /// Round depth to whole millimetres like the sensor does.
    pub quantize: bool,
    /// Only synthesize pixels inside `[u0, u1) x [v0, v1)`; others stay zero.
    pub window: Option<[usize; 4]>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { timestamp: 0.0, quantize: true, window: None }
    }
}

pub fn render_frame(scene: &SceneSpec, intr: &CameraIntrinsics, model: &NoiseModel, seed: u64) -> Result<SensorFrame> {
    render_frame_with(scene, intr, model, seed, &RenderOptions::default())
}

/// Surface a ray sees.
#[derive(Clone, Copy)]
struct Hit {
    z_order: f64,
    depth: f64,
    intensity: u16,
}

/// SplitMix64 finalizer; turns structured inputs into independent seeds.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders one frame. Identical arguments give identical frames.
pub fn render_frame_with(
    scene: &SceneSpec,
    intr: &CameraIntrinsics,
    model: &NoiseModel,
    seed: u64,
    opts: &RenderOptions,
) -> Result<SensorFrame> {
    intr.validate()?;
    scene.validate()?;
    let (w, h) = (intr.width, intr.height);
    let [u0, v0, u1, v1] = opts.window.unwrap_or([0, 0, w, h]);
    let (u1, v1) = (u1.min(w), v1.min(h));
    let mut frame = SensorFrame::blank(intr, opts.timestamp);

    // sparse list of surface hits; most of the image sees nothing
    let mut hits: Vec<(usize, Hit)> = Vec::new();
    for plane in &scene.planes {
        let n = Vector3::from(plane.normal).normalize();
        let offset = plane.offset / Vector3::from(plane.normal).norm();
        for v in v0..v1 {
            for u in u0..u1 {
                let ray = intr.ray(Pixel::new(u as f64, v as f64));
                let denom = n.dot(&ray);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = offset / denom;
                if t > 0.0 {
                    hits.push((v * w + u, Hit { z_order: t, depth: t, intensity: plane.reflectivity }));
                }
            }
        }
    }
    for d in &scene.distractors {
        for v in d.v_min.max(v0)..=d.v_max.min(v1.saturating_sub(1)) {
            for u in d.u_min.max(u0)..=d.u_max.min(u1.saturating_sub(1)) {
                let ray = intr.ray(Pixel::new(u as f64, v as f64));
                let t = d.depth_mm / ray.z;
                hits.push((v * w + u, Hit { z_order: t, depth: t, intensity: d.intensity }));
            }
        }
    }
    for (center, radius) in scene.spheres() {
        draw_sphere(intr, &center, radius, [u0, v0, u1, v1], &mut |idx, hit| hits.push((idx, hit)));
    }
    // nearest surface wins
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.z_order.total_cmp(&b.1.z_order)));
    hits.dedup_by_key(|h| h.0);

    let bg = u64::from(scene.background_reflectivity_max.max(1));
    let bg_seed = derive_seed(seed, 0, 0);
    for v in v0..v1 {
        for u in u0..u1 {
            let idx = v * w + u;
            frame.reflectivity[idx] = (derive_seed(bg_seed, 1, idx as u64) % bg) as u16;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0));
    for (idx, hit) in hits {
        frame.reflectivity[idx] = hit.intensity;
        let noise: f64 = StandardNormal.sample(&mut rng);
        if hit.depth.is_finite() && model.in_range(hit.depth) {
            let mut d = hit.depth + model.eval(hit.depth) * noise;
            if opts.quantize {
                d = d.round();
            }
            if (1.0..=MAX_DEPTH_MM).contains(&d) {
                frame.depth[idx] = d;
            }
        }
    }
    Ok(frame)
}

/// Lowest intensity of the marker band; shading is expressed as excess
/// brightness above it.
pub const MARKER_BAND_FLOOR: f64 = 499.0;

/// Draws a marker as a disc centered on the projected sphere center with
/// the radius implied by the expected pixel area at the near-surface
/// distance. Pixel depth is the exact first ray-sphere intersection; disc
/// pixels whose ray grazes past the sphere get no depth.
///
/// The cosine profile is given a slight linear tilt so that the brightness
/// centroid above the band floor lands on the projected center, much as
/// lens blur would; a hard-edged disc sampled on the pixel grid otherwise
/// carries a position bias of up to a fifth of a pixel.
fn draw_sphere(
    intr: &CameraIntrinsics,
    center: &Point3,
    radius: f64,
    window: [usize; 4],
    put: &mut impl FnMut(usize, Hit),
) {
    let Ok(c_px) = project(intr, center) else { return };
    let dist = center.coords.norm();
    if dist <= radius {
        return;
    }
    let surface = dist - radius;
    let Ok(area) = marker_pixel_area(intr, radius, surface) else { return };
    let r_px = (area / std::f64::consts::PI).sqrt();
    if r_px <= 0.0 {
        return;
    }
    let [u0, v0, u1, v1] = window;
    let lo_u = (c_px.u - r_px).ceil().max(u0 as f64);
    let hi_u = (c_px.u + r_px).floor().min(u1 as f64 - 1.0);
    let lo_v = (c_px.v - r_px).ceil().max(v0 as f64);
    let hi_v = (c_px.v + r_px).floor().min(v1 as f64 - 1.0);
    if lo_u > hi_u || lo_v > hi_v {
        return;
    }

    // (u, v, offset from center, base weight)
    let mut px = Vec::new();
    for v in lo_v as usize..=hi_v as usize {
        for u in lo_u as usize..=hi_u as usize {
            let d = nalgebra::Vector2::new(u as f64 - c_px.u, v as f64 - c_px.v);
            let rho = d.norm() / r_px;
            if rho <= 1.0 {
                let w = MARKER_RIM - MARKER_BAND_FLOOR
                    + (MARKER_PEAK - MARKER_RIM) * 0.5 * (1.0 + (std::f64::consts::PI * rho).cos());
                px.push((u, v, d, w));
            }
        }
    }
    let tilt = centroid_tilt(&px);

    let c = center.coords;
    for (u, v, d, w) in px {
        let intensity = (MARKER_BAND_FLOOR + w * (1.0 + tilt.dot(&d))).round().clamp(MARKER_BAND_FLOOR + 1.0, 65535.0);
        let ray = intr.ray(Pixel::new(u as f64, v as f64));
        let b = ray.dot(&c);
        let disc = b * b - (c.norm_squared() - radius * radius);
        let (z_order, depth) = if disc >= 0.0 {
            let t = b - disc.sqrt();
            (t, t)
        } else {
            (surface, f64::NAN)
        };
        put(v * intr.width + u, Hit { z_order, depth, intensity: intensity as u16 });
    }
}

/// Tilt `l` such that weights `w (1 + l·d)` have their centroid at `d = 0`.
/// Falls back to a partial tilt when the full one would push a weight
/// close to zero (blobs of one or two pixels).
fn centroid_tilt(px: &[(usize, usize, nalgebra::Vector2<f64>, f64)]) -> nalgebra::Vector2<f64> {
    let mut first = nalgebra::Vector2::zeros();
    let mut second = nalgebra::Matrix2::zeros();
    for (_, _, d, w) in px {
        first += *w * d;
        second += *w * d * d.transpose();
    }
    let Some(inv) = second.try_inverse() else { return nalgebra::Vector2::zeros() };
    if second.determinant() < 1e-9 {
        return nalgebra::Vector2::zeros();
    }
    let tilt = -(inv * first);
    let worst = px.iter().map(|(_, _, d, _)| tilt.dot(d)).fold(0.0, f64::min);
    const MIN_FACTOR: f64 = 0.05;
    if 1.0 + worst < MIN_FACTOR {
        tilt * ((1.0 - MIN_FACTOR) / -worst)
    } else {
        tilt
    }
}

/// Scene with one tool at `pose` and nothing else.
pub fn single_tool_scene(tool: &ToolDefinition, pose: RigidTransform) -> SceneSpec {
    SceneSpec { tools: vec![PlacedTool { tool: tool.clone(), pose }], ..SceneSpec::default() }
}

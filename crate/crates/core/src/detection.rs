//! Marker detection: threshold the reflectivity image, split it into
//! connected blobs, keep blobs whose area fits a marker at their depth, and
//! lift each blob to the 3-D center of its sphere.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{back_project, sphere_center_correct, Pixel, Point3};
use crate::sensor::{marker_pixel_area, SensorFrame};

/// Reflectivity above which a pixel counts as marker-bright.
pub const DEFAULT_THRESHOLD: u16 = 500;

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.data[v * self.width + u] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

pub fn segment_reflectivity(frame: &SensorFrame, threshold: u16) -> Mask {
    Mask {
        width: frame.width,
        height: frame.height,
        data: frame.reflectivity.iter().map(|&r| r >= threshold).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// A connected bright region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Pixels as (u, v), in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub centroid: Pixel,
    pub area: usize,
    pub peak_intensity: u16,
}

/// Connected components with `min_area <= area <= max_area`, in raster
/// order of their first pixel.
///
/// The centroid weights each pixel by how far its intensity rises above
/// `floor`; with `floor = 0` this is the plain intensity-weighted centroid.
/// Without an intensity image every pixel weighs one.
pub fn extract_blobs(
    mask: &Mask,
    intensity: Option<&[u16]>,
    min_area: usize,
    max_area: usize,
    connectivity: Connectivity,
    floor: u16,
) -> Vec<Blob> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(idx) = stack.pop() {
            let (u, v) = (idx % w, idx / w);
            pixels.push((u, v));
            for (du, dv) in neighbours(connectivity) {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                    continue;
                }
                let n = nv as usize * w + nu as usize;
                if mask.data[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        if pixels.len() < min_area || pixels.len() > max_area {
            continue;
        }
        pixels.sort_by_key(|&(u, v)| (v, u));
        blobs.push(make_blob(pixels, w, intensity, floor));
    }
    blobs
}

fn neighbours(c: Connectivity) -> &'static [(isize, isize)] {
    const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const EIGHT: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    match c {
        Connectivity::Four => &FOUR,
        Connectivity::Eight => &EIGHT,
    }
}

fn make_blob(pixels: Vec<(usize, usize)>, width: usize, intensity: Option<&[u16]>, floor: u16) -> Blob {
    let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
    let mut peak = 0u16;
    for &(u, v) in &pixels {
        let weight = match intensity {
            Some(img) => {
                let i = img[v * width + u];
                peak = peak.max(i);
                // +1 keeps pixels sitting exactly on the floor in play
                f64::from(i.saturating_sub(floor)) + 1.0
            }
            None => 1.0,
        };
        su += weight * u as f64;
        sv += weight * v as f64;
        sw += weight;
    }
    Blob { area: pixels.len(), centroid: Pixel::new(su / sw, sv / sw), peak_intensity: peak, pixels }
}

/// How a blob's depth is summarised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthMode {
    /// Depth of the pixel nearest the centroid.
    CentralPixel,
    /// Median of the raw blob depths.
    Median,
    /// Median over blob pixels of the surface depth each pixel implies along
    /// the centroid ray, given the sphere radius. Removes the bias the
    /// sphere's curvature puts into a plain median.
    SphereMedian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub threshold: u16,
    /// Sphere radius used for center correction, mm (0 for flat markers).
    pub marker_radius: f64,
    /// Radius used for the expected-area window; defaults to `marker_radius`.
    pub area_radius: Option<f64>,
    /// Accepted blob area as multiples of the expected area.
    pub area_window: (f64, f64),
    /// Hard pixel-count limits applied before depth is known.
    pub min_pixels: usize,
    pub max_pixels: usize,
    pub connectivity: Connectivity,
    pub depth_mode: DepthMode,
    /// Largest tolerated fraction of invalid depth pixels in a blob.
    pub max_invalid_fraction: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            marker_radius: 5.75,
            area_radius: None,
            area_window: (0.4, 2.5),
            min_pixels: 1,
            max_pixels: 20_000,
            connectivity: Connectivity::Eight,
            depth_mode: DepthMode::SphereMedian,
            max_invalid_fraction: 0.5,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.area_window;
        if self.threshold == 0 || !(self.marker_radius >= 0.0) || !(lo > 0.0 && hi > lo) || self.min_pixels > self.max_pixels {
            return Err(Error::InvalidArgument("invalid detection config".into()));
        }
        Ok(())
    }
}

/// A marker lifted to 3-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedMarker {
    /// Sphere center in camera coordinates, mm.
    pub position: Point3,
    pub blob: Blob,
    /// Ray depth of the sphere surface along the centroid ray, mm.
    pub mean_depth: f64,
}

impl DetectedMarker {
    /// Unit ray through the blob centroid.
    pub fn ray(&self) -> Vector3<f64> {
        self.position.coords.normalize()
    }

    /// Marker without image support, for tests and synthetic point sets.
    pub fn from_point(position: Point3, radius: f64) -> Self {
        let d = position.coords.norm();
        Self {
            position,
            blob: Blob { pixels: Vec::new(), centroid: Pixel::new(0.0, 0.0), area: 0, peak_intensity: 0 },
            mean_depth: (d - radius).max(f64::MIN_POSITIVE),
        }
    }
}

/// Why blobs were discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub invalid_depth: usize,
    pub area: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Detections {
    pub markers: Vec<DetectedMarker>,
    pub dropped: DropCounts,
}

pub fn localize_markers(frame: &SensorFrame, cfg: &DetectionConfig) -> Result<Vec<DetectedMarker>> {
    Ok(localize_markers_with_report(frame, cfg)?.markers)
}

pub fn localize_markers_with_report(frame: &SensorFrame, cfg: &DetectionConfig) -> Result<Detections> {
    cfg.validate()?;
    let intr = &frame.intrinsics;
    let mask = segment_reflectivity(frame, cfg.threshold);
    let blobs = extract_blobs(
        &mask,
        Some(&frame.reflectivity),
        cfg.min_pixels,
        cfg.max_pixels,
        cfg.connectivity,
        cfg.threshold.saturating_sub(1),
    );
    let mut out = Detections::default();
    let area_r = cfg.area_radius.unwrap_or(cfg.marker_radius);
    for blob in blobs {
        let center_ray = intr.ray(blob.centroid);
        let Some(depth) = blob_depth(frame, &blob, &center_ray, cfg) else {
            out.dropped.invalid_depth += 1;
            continue;
        };
        if area_r > 0.0 {
            let expected = marker_pixel_area(intr, area_r, depth)?;
            let area = blob.area as f64;
            if area < cfg.area_window.0 * expected || area > cfg.area_window.1 * expected {
                out.dropped.area += 1;
                continue;
            }
        }
        let surface = back_project(intr, blob.centroid, depth)?;
        let position = sphere_center_correct(&surface, depth, cfg.marker_radius)?;
        out.markers.push(DetectedMarker { position, blob, mean_depth: depth });
    }
    Ok(out)
}

fn blob_depth(frame: &SensorFrame, blob: &Blob, center_ray: &Vector3<f64>, cfg: &DetectionConfig) -> Option<f64> {
    let intr = &frame.intrinsics;
    let valid: Vec<(usize, usize, f64)> = blob
        .pixels
        .iter()
        .map(|&(u, v)| (u, v, frame.depth[frame.index(u, v)]))
        .filter(|&(_, _, d)| d > 0.0)
        .collect();
    let invalid = blob.pixels.len() - valid.len();
    if valid.is_empty() || invalid as f64 > cfg.max_invalid_fraction * blob.pixels.len() as f64 {
        return None;
    }
    match cfg.depth_mode {
        DepthMode::CentralPixel => {
            let cu = blob.centroid.u.round() as usize;
            let cv = blob.centroid.v.round() as usize;
            let d = *frame.depth.get(frame.index(cu.min(frame.width - 1), cv.min(frame.height - 1)))?;
            (d > 0.0).then_some(d)
        }
        DepthMode::Median => median(valid.iter().map(|p| p.2).collect()),
        DepthMode::SphereMedian if cfg.marker_radius == 0.0 => median(valid.iter().map(|p| p.2).collect()),
        DepthMode::SphereMedian => {
            let r = cfg.marker_radius;
            let implied = valid
                .iter()
                .map(|&(u, v, d)| {
                    let p = intr.ray(Pixel::new(u as f64, v as f64)) * d;
                    let along = center_ray.dot(&p);
                    let disc = (along * along - p.norm_squared() + r * r).max(0.0);
                    along + disc.sqrt() - r
                })
                .collect();
            median(implied)
        }
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

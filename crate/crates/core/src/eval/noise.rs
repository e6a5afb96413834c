//! Depth-noise characterisation: repeated frames of a static plane, a plane
//! fit per depth, a normality check on the residuals and a quadratic fit of
//! the noise level against depth.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::stats::{normality_statistic, NormalityTest};
use super::sub_seed;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pixel, Point3};
use crate::par::{map_range, Parallelism};
use crate::sensor::{render_frame_with, NoiseModel, PlaneSurface, RenderOptions, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneFit {
    pub normal: Vector3<f64>,
    /// Plane is `normal · p = offset`, with `offset >= 0`.
    pub offset: f64,
    pub rms_point_to_plane: f64,
}

impl PlaneFit {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Total least-squares plane: the normal is the direction of least spread.
pub fn fit_plane(points: &[Point3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry("plane fit needs at least 3 points".into()));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (small, mid, large) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(mid > 1e-12 * large) || large <= 0.0 {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    let mut offset = normal.dot(&centroid);
    if offset < 0.0 || (offset == 0.0 && normal.z < 0.0) {
        normal = -normal;
        offset = -offset;
    }
    let rms = (small.max(0.0) / n).sqrt();
    Ok(PlaneFit { normal, offset, rms_point_to_plane: rms })
}

/// Least-squares quadratic `sigma = a + b d + c d^2` and its R².
pub fn fit_noise_quadratic(depths: &[f64], sigmas: &[f64]) -> Result<(NoiseModel, f64)> {
    if depths.len() != sigmas.len() {
        return Err(Error::InvalidArgument("depth and sigma lists differ in length".into()));
    }
    let mut distinct = depths.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 distinct depths".into()));
    }
    // scale depth to metres for conditioning
    let k = 1e-3;
    let a = DMatrix::from_fn(depths.len(), 3, |i, j| (depths[i] * k).powi(j as i32));
    let y = DVector::from_column_slice(sigmas);
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-10 * sv.max() {
        return Err(Error::DegenerateFit("design matrix is rank deficient".into()));
    }
    let x = svd.solve(&y, 1e-14).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let fitted = &a * &x;
    let mean = y.mean();
    let ss_res = (&y - &fitted).norm_squared();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let range = [distinct[0], distinct[distinct.len() - 1]];
    let model = NoiseModel { a: x[0], b: x[1] * k, c: x[2] * k * k, valid_range: range };
    Ok((model, r2))
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyConfig {
    pub depths: usize,
    pub frames: usize,
    /// Side of the square image patch observed, pixels.
    pub roi: usize,
    /// Round depth to whole millimetres like the sensor output. The fit then
    /// subtracts the quantization variance, which swamps the noise at short
    /// range.
    pub quantize: bool,
    pub ad_subsamples: usize,
    pub ad_sample_size: usize,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        Self { depths: 48, frames: 300, roi: 32, quantize: false, ad_subsamples: 5, ad_sample_size: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthNoise {
    /// Mean measured ray depth over the patch, mm.
    pub depth: f64,
    /// RMS residual along the viewing rays, mm.
    pub sigma: f64,
    pub plane: PlaneFit,
    pub normality: Vec<NormalityTest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudy {
    pub per_depth: Vec<DepthNoise>,
    pub fit: NoiseModel,
    pub r2: f64,
    pub non_reject_rate: f64,
}

/// Patch camera with the same focal length as `sensor`, centered on its
/// optical axis.
fn patch_camera(sensor: &CameraIntrinsics, roi: usize) -> Result<CameraIntrinsics> {
    let c = (roi as f64 - 1.0) / 2.0;
    CameraIntrinsics::new(sensor.fx, sensor.fy, sensor.sx, sensor.sy, c, c, roi, roi)
}

/// Runs the static-plane protocol against `model` and fits it back.
pub fn noise_study(
    sensor: &CameraIntrinsics,
    model: &NoiseModel,
    cfg: &NoiseStudyConfig,
    seed: u64,
    mode: Parallelism,
) -> Result<NoiseStudy> {
    if cfg.depths < 3 || cfg.frames == 0 || cfg.roi < 2 {
        return Err(Error::InvalidArgument("noise study needs >= 3 depths, frames and a patch".into()));
    }
    let intr = patch_camera(sensor, cfg.roi)?;
    // keep the patch corners inside the valid range
    let corner = intr.ray(Pixel::new(0.0, 0.0)).z;
    let lo = model.valid_range[0] + 1.0;
    let hi = (model.valid_range[1] - 1.0) * corner;
    let zs: Vec<f64> = (0..cfg.depths).map(|i| lo + (hi - lo) * i as f64 / (cfg.depths - 1) as f64).collect();

    let per_depth = map_range(zs.len(), mode, |i| {
        study_depth(&intr, model, zs[i], cfg, sub_seed(seed, 0x6e6f, i as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let depths: Vec<f64> = per_depth.iter().map(|d| d.depth).collect();
    let sigmas: Vec<f64> = per_depth.iter().map(|d| d.sigma).collect();
    let (fit, r2) = fit_noise_quadratic(&depths, &sigmas)?;
    let tests: Vec<bool> = per_depth.iter().flat_map(|d| d.normality.iter().map(|t| !t.reject)).collect();
    let non_reject_rate = tests.iter().filter(|&&ok| ok).count() as f64 / tests.len().max(1) as f64;
    Ok(NoiseStudy { per_depth, fit, r2, non_reject_rate })
}

fn study_depth(intr: &CameraIntrinsics, model: &NoiseModel, z: f64, cfg: &NoiseStudyConfig, seed: u64) -> Result<DepthNoise> {
    let scene = SceneSpec {
        planes: vec![PlaneSurface { normal: [0.0, 0.0, 1.0], offset: z, reflectivity: 200 }],
        ..SceneSpec::default()
    };
    let opts = RenderOptions { quantize: cfg.quantize, ..RenderOptions::default() };
    let rays: Vec<Vector3<f64>> = (0..intr.height)
        .flat_map(|v| (0..intr.width).map(move |u| (u, v)))
        .map(|(u, v)| intr.ray(Pixel::new(u as f64, v as f64)))
        .collect();
    let mut points = Vec::with_capacity(cfg.frames * rays.len());
    let mut point_rays = Vec::with_capacity(points.capacity());
    for f in 0..cfg.frames {
        let frame = render_frame_with(&scene, intr, model, sub_seed(seed, 1, f as u64), &opts)?;
        for (d, ray) in frame.depth.iter().zip(&rays) {
            if *d > 0.0 {
                points.push(Point3::from(ray * *d));
                point_rays.push(*ray);
            }
        }
    }
    let plane = fit_plane(&points)?;
    let residuals: Vec<f64> = points
        .iter()
        .zip(&point_rays)
        .map(|(p, r)| plane.signed_distance(p) / plane.normal.dot(r))
        .collect();
    let depth = points.iter().map(|p| p.coords.norm()).sum::<f64>() / points.len() as f64;
    let mut var = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    if cfg.quantize {
        var = (var - crate::tracking::QUANTIZATION_VARIANCE).max(0.0);
    }

    // short runs test smaller samples rather than none
    let sample_size = cfg.ad_sample_size.min(residuals.len() / cfg.ad_subsamples.max(1)).max(8);
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 2, 0)));
    let normality = order
        .chunks_exact(sample_size)
        .take(cfg.ad_subsamples)
        .map(|idx| normality_statistic(&idx.iter().map(|&i| residuals[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthNoise { depth, sigma: var.sqrt(), plane, normality })
}

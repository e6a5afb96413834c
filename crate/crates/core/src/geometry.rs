//! Camera model, rigid transforms and least-squares point-set registration.
//!
//! Depths handled here are *ray* distances: the Euclidean distance from the
//! optical center to the observed point, not its z coordinate.

use nalgebra::{Matrix3, Matrix4, Vector3, SVD};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Continuous image coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Pinhole intrinsics expressed as focal length and pixel pitch, both in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub sx: f64,
    pub sy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        sx: f64,
        sy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let intr = Self { fx, fy, sx, sy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// Square-pixel camera whose horizontal and vertical field of view,
    /// measured between the outer pixel edges, equals `fov_deg`.
    pub fn with_fov(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("fov {fov_deg} not in (0, 180)")));
        }
        let pitch = 0.01;
        let half = fov_deg.to_radians() / 2.0;
        let fx = pitch * (width as f64 / 2.0) / half.tan();
        let fy = pitch * (height as f64 / 2.0) / half.tan();
        Self::new(
            fx,
            fy,
            pitch,
            pitch,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    /// Synthetic stand-in for the depth camera: 512x512 pixels, 127 degrees
    /// in both directions. The real device's calibration is not published, so
    /// these numbers are an assumption matched to the reported field of view.
    pub fn default_sensor() -> Self {
        Self::with_fov(512, 512, 127.0).expect("static intrinsics are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.fx, self.fy, self.sx, self.sy];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "focal lengths and pixel pitch must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidArgument("principal point outside the image".into()));
        }
        Ok(())
    }

    /// Focal length in pixels along u.
    pub fn fu(&self) -> f64 {
        self.fx / self.sx
    }

    /// Focal length in pixels along v.
    pub fn fv(&self) -> f64 {
        self.fy / self.sy
    }

    /// Unit-plane coordinates (x, y) of a pixel.
    pub fn unit_plane(&self, px: Pixel) -> (f64, f64) {
        ((px.u - self.cx) * self.sx / self.fx, (px.v - self.cy) * self.sy / self.fy)
    }

    /// Unit direction of the ray through `px`.
    pub fn ray(&self, px: Pixel) -> Vector3<f64> {
        let (x, y) = self.unit_plane(px);
        Vector3::new(x, y, 1.0).normalize()
    }

    /// Field of view between the outer pixel edges, degrees.
    pub fn fov_deg(&self) -> (f64, f64) {
        let left = (self.cx + 0.5) / self.fu();
        let right = (self.width as f64 - 0.5 - self.cx) / self.fu();
        let top = (self.cy + 0.5) / self.fv();
        let bottom = (self.height as f64 - 0.5 - self.cy) / self.fv();
        (
            (left.atan() + right.atan()).to_degrees(),
            (top.atan() + bottom.atan()).to_degrees(),
        )
    }

    /// True when the pixel lies on the sensor (pixel centers are integers).
    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= -0.5
            && px.v >= -0.5
            && px.u < self.width as f64 - 0.5
            && px.v < self.height as f64 - 0.5
    }
}

/// Lifts a pixel with known ray depth to a camera-frame point.
pub fn back_project(intr: &CameraIntrinsics, px: Pixel, depth: f64) -> Result<Point3> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidArgument(format!("depth must be positive, got {depth}")));
    }
    if !(px.u.is_finite() && px.v.is_finite()) {
        return Err(Error::InvalidArgument("pixel is not finite".into()));
    }
    let (x, y) = intr.unit_plane(px);
    let p = Vector3::new(x, y, 1.0);
    Ok(Point3::from(p * (depth / p.norm())))
}

/// Moves a point observed on the near surface of a sphere out to the sphere center.
pub fn sphere_center_correct(p: &Point3, depth: f64, radius: f64) -> Result<Point3> {
    if radius < 0.0 || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("marker radius must be >= 0, got {radius}")));
    }
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("depth must be positive, got {depth}")));
    }
    Ok(Point3::from(p.coords * ((depth + radius) / depth)))
}

/// Pinhole projection onto the image.
pub fn project(intr: &CameraIntrinsics, p: &Point3) -> Result<Pixel> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(Pixel {
        u: intr.cx + p.x / p.z * intr.fu(),
        v: intr.cy + p.y / p.z * intr.fv(),
    })
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a transform, checking orthonormality and handedness to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self { rotation, translation };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Rotation of `angle_rad` about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle_rad: f64, translation: Vector3<f64>) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        let rotation = nalgebra::Rotation3::from_axis_angle(&axis, angle_rad).into_inner();
        Self { rotation, translation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("transform has non-finite entries".into()));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        let det = self.rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not proper orthonormal (|RtR - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Geodesic rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// Geodesic angle of a rotation matrix, `acos((trace - 1) / 2)`, radians.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = &self.rotation;
        let repr = TransformRepr {
            r: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            t: [self.translation.x, self.translation.y, self.translation.z],
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let rotation = Matrix3::from_row_slice(&repr.r);
        let translation = Vector3::from(repr.t);
        // Serialized transforms are rounded, so accept small drift and snap back.
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho < 1e-6) || !((rotation.determinant() - 1.0).abs() < 1e-6) {
            return Err(serde::de::Error::custom("rotation is not proper orthonormal"));
        }
        let rotation = orthonormalize(&rotation);
        RigidTransform::new(rotation, translation).map_err(serde::de::Error::custom)
    }
}

/// Nearest proper rotation to `m` in the Frobenius sense.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt
}

/// Result of a least-squares rigid registration.
#[derive(Debug, Clone, Copy)]
pub struct Registration {
    pub transform: RigidTransform,
    pub rmse: f64,
}

/// Finds the proper rigid motion minimising `Σ ‖R src_i + t − dst_i‖²`
/// (centroid subtraction + SVD of the cross-covariance, reflection-corrected).
pub fn rigid_register(src: &[Point3], dst: &[Point3]) -> Result<Registration> {
    if src.len() != dst.len() {
        return Err(Error::InvalidArgument(format!(
            "point count mismatch: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 point pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let src_c = src.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let dst_c = dst.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;

    let mut cov = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        cov += (p.coords - src_c) * (q.coords - dst_c).transpose();
    }
    let svd = SVD::new(cov, true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    // Rank 2 (planar sets) is fine; rank <= 1 means collinear or coincident.
    if !(sv[0] > 0.0) || sv[1] < 1e-9 * sv[0] {
        return Err(Error::DegenerateGeometry(
            "source points are collinear or coincident".into(),
        ));
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = dst_c - rotation * src_c;
    let transform = RigidTransform { rotation, translation };

    let sse: f64 = src
        .iter()
        .zip(dst)
        .map(|(p, q)| (transform.apply(p) - q).norm_squared())
        .sum();
    Ok(Registration { transform, rmse: (sse / n).sqrt() })
}

/// Horizontal and vertical field of view (degrees) spanned by unit-plane
/// samples: the largest angle between any two rays `(x_i, 0, 1)` / `(0, y_i, 1)`.
pub fn fov_estimate(unit_plane_xs: &[f64], unit_plane_ys: &[f64]) -> Result<(f64, f64)> {
    fn span(vals: &[f64], axis: &str) -> Result<f64> {
        if vals.len() < 2 {
            return Err(Error::InvalidArgument(format!("need >= 2 {axis} samples")));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite {axis} sample")));
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // atan is monotone, so the widest pair is always (min, max).
        Ok((hi.atan() - lo.atan()).to_degrees())
    }
    Ok((span(unit_plane_xs, "x")?, span(unit_plane_ys, "y")?))
}

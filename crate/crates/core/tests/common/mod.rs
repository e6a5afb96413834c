#![allow(dead_code)]

use irtrack::registry::ToolDefinition;
use irtrack::tracking::passes;
use irtrack::{Point3, RigidTransform};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_rotation<R: Rng>(rng: &mut R) -> nalgebra::Matrix3<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

pub fn random_transform<R: Rng>(rng: &mut R, translation_scale: f64) -> RigidTransform {
    let t = Vector3::from_fn(|_, _| rng.random_range(-translation_scale..translation_scale));
    RigidTransform::new(random_rotation(rng), t).expect("proper rotation")
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| Point3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}

/// A tool with markers spread over a `scale`-mm box and no two markers
/// closer than 15 mm.
pub fn random_tool<R: Rng>(rng: &mut R, name: &str, n: usize, scale: f64) -> ToolDefinition {
    loop {
        let pts = random_points(rng, n, scale);
        let spread = pts.iter().enumerate().all(|(i, a)| pts[i + 1..].iter().all(|b| (a - b).norm() > 15.0));
        if spread {
            return ToolDefinition::new(name, pts, 5.75).unwrap();
        }
    }
}

pub fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    sigma * rng.sample::<f64, _>(StandardNormal)
}

pub fn jitter<R: Rng>(rng: &mut R, p: &Point3, sigma: f64) -> Point3 {
    Point3::new(p.x + gaussian(rng, sigma), p.y + gaussian(rng, sigma), p.z + gaussian(rng, sigma))
}

/// Every injective assignment of detections to tool slots, enumerated in
/// lexicographic order and filtered by the two gates. Loss is the sum of
/// side mismatches over `i < j` divided by `N (N - 1)`.
pub fn brute_force_candidates(tool: &ToolDefinition, dets: &[Point3], t_side: f64, t_shape: f64) -> Vec<(Vec<usize>, f64)> {
    let n = tool.marker_count();
    let m = tools_dist::Lengths::new(dets);
    let t = tools_dist::Lengths::new(tool.markers());
    let mut out = Vec::new();
    let mut perm = Vec::with_capacity(n);
    permutations(n, dets.len(), &mut perm, &mut |a| {
        let mut sides_ok = true;
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let e = (t.get(i, j) - m.get(a[i], a[j])).abs();
                sides_ok &= passes(e, t_side);
                sum += e;
            }
        }
        let loss = sum / (n * (n - 1)) as f64;
        if sides_ok && passes(loss, t_shape) {
            out.push((a.to_vec(), loss));
        }
    });
    out
}

fn permutations(n: usize, m: usize, perm: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if perm.len() == n {
        visit(perm);
        return;
    }
    for d in 0..m {
        if !perm.contains(&d) {
            perm.push(d);
            permutations(n, m, perm, visit);
            perm.pop();
        }
    }
}

mod tools_dist {
    use irtrack::Point3;

    /// Plain distance lookup, computed independently of the library table.
    pub struct Lengths<'a>(&'a [Point3]);

    impl<'a> Lengths<'a> {
        pub fn new(p: &'a [Point3]) -> Self {
            Self(p)
        }

        pub fn get(&self, i: usize, j: usize) -> f64 {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            (self.0[a] - self.0[b]).norm()
        }
    }
}

pub fn transforms_close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
    (a.rotation - b.rotation).norm() < tol && (a.translation - b.translation).norm() < tol
}

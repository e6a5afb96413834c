mod common;

use common::*;
use irtrack::detection::{extract_blobs, Connectivity, DetectedMarker, Mask};
use irtrack::eval::latency::{estimate_latency, synthetic_trace, MotionTrace};
use irtrack::fixtures::standard_tools;
use irtrack::geometry::{back_project, fov_estimate, project, rigid_register, sphere_center_correct};
use irtrack::io::{read_ahf_stream, write_ahf};
use irtrack::nav::{chain_pose, trajectory_error, FrameGraph, Trajectory};
use irtrack::registry::{define_tool, shape_distance, DefinitionSession};
use irtrack::sensor::{render_frame_with, single_tool_scene, NoiseModel, RenderOptions};
use irtrack::tracking::{find_candidates, pairwise_lengths, DepthFilter, Tracker, TrackerConfig};
use irtrack::{CameraIntrinsics, Pixel, Point3, RigidTransform};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::default_sensor()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn back_project_keeps_ray_distance(u in -50.0..560.0f64, v in -50.0..560.0f64, d in 1.0..3000.0f64) {
        let p = back_project(&intrinsics(), Pixel::new(u, v), d).unwrap();
        prop_assert!((p.coords.norm() - d).abs() <= 1e-12 * d);
    }

    #[test]
    fn project_inverts_back_project(u in 0.0..511.0f64, v in 0.0..511.0f64, d in 100.0..1500.0f64) {
        let intr = intrinsics();
        let px = project(&intr, &back_project(&intr, Pixel::new(u, v), d).unwrap()).unwrap();
        prop_assert!((px.u - u).abs() < 1e-9 && (px.v - v).abs() < 1e-9);
    }

    #[test]
    fn sphere_correction_is_linear(x in -300.0..300.0f64, y in -300.0..300.0f64, z in 100.0..900.0f64, r in 0.0..10.0f64) {
        let p = Point3::new(x, y, z);
        let d = p.coords.norm();
        let c = sphere_center_correct(&p, d, r).unwrap();
        let expect = p.coords * ((d + r) / d);
        prop_assert!((c.coords - expect).norm() < 1e-12 * d);
        prop_assert_eq!(sphere_center_correct(&p, d, 0.0).unwrap(), p);
    }

    #[test]
    fn registration_recovers_motion(seed in any::<u64>(), n in 3usize..12, flatness in prop_oneof![Just(1.0), Just(1e-3), Just(0.0)]) {
        let mut r = rng(seed);
        let mut src = random_points(&mut r, n, 80.0);
        for p in &mut src {
            p.z *= flatness;
        }
        // nearly collinear sets are ill-conditioned, not wrong
        let mean = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n as f64;
        let spread = nalgebra::DMatrix::from_fn(n, 3, |i, j| src[i][j] - mean[j]).singular_values();
        let mut sv: Vec<f64> = spread.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sv[1] > 0.05 * sv[0]);
        let truth = random_transform(&mut r, 500.0);
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let reg = rigid_register(&src, &dst).unwrap();
        prop_assert!(reg.rmse < 1e-9);
        prop_assert!((reg.transform.rotation.determinant() - 1.0).abs() < 1e-9);
        prop_assert!(transforms_close(&reg.transform, &truth, 1e-9));
    }

    #[test]
    fn registration_residual_ignores_common_motion(seed in any::<u64>(), n in 4usize..10) {
        let mut r = rng(seed);
        let src = random_points(&mut r, n, 60.0);
        let dst: Vec<Point3> = src.iter().map(|p| jitter(&mut r, p, 0.5)).collect();
        let g = random_transform(&mut r, 400.0);
        let a = rigid_register(&src, &dst).unwrap().rmse;
        let moved_src: Vec<Point3> = src.iter().map(|p| g.apply(p)).collect();
        let moved_dst: Vec<Point3> = dst.iter().map(|p| g.apply(p)).collect();
        let b = rigid_register(&moved_src, &moved_dst).unwrap().rmse;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn fov_is_order_invariant_and_monotone(
        xs in prop::collection::vec(-2.0..2.0f64, 2..20),
        ys in prop::collection::vec(-2.0..2.0f64, 2..20),
        extra in -3.0..3.0f64,
        seed in any::<u64>(),
    ) {
        let base = fov_estimate(&xs, &ys).unwrap();
        let mut sx = xs.clone();
        let mut sy = ys.clone();
        sx.shuffle(&mut rng(seed));
        sy.shuffle(&mut rng(seed ^ 1));
        prop_assert_eq!(fov_estimate(&sx, &sy).unwrap(), base);
        sx.push(extra);
        sy.push(extra);
        let grown = fov_estimate(&sx, &sy).unwrap();
        prop_assert!(grown.0 >= base.0 && grown.1 >= base.1);
    }

    #[test]
    fn length_table_is_symmetric(seed in any::<u64>(), n in 1usize..10) {
        let t = pairwise_lengths(&random_points(&mut rng(seed), n, 100.0));
        for i in 0..n {
            prop_assert_eq!(t.get(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn kalman_variance_never_grows_past_measurement(zs in prop::collection::vec(400.0..600.0f64, 1..50), sigma in 0.1..3.0f64) {
        let mut f = DepthFilter::default();
        for z in zs {
            let est = f.update(z, sigma, 1.0);
            prop_assert!(f.variance <= sigma * sigma + 1e-12);
            prop_assert!(est.is_finite());
        }
    }

    #[test]
    fn chain_grouping_is_irrelevant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let names = ["W", "H", "A", "S", "I"];
        let ts: Vec<RigidTransform> = (0..4).map(|_| random_transform(&mut r, 200.0)).collect();
        let mut g = FrameGraph::new();
        for (k, t) in ts.iter().enumerate() {
            g.set_static(names[k], names[k + 1], *t);
        }
        let whole = chain_pose(&g, &names, 0.0).unwrap();
        let left = chain_pose(&g, &names[..3], 0.0).unwrap().compose(&chain_pose(&g, &names[2..], 0.0).unwrap());
        let right = ts[0].compose(&ts[1].compose(&ts[2].compose(&ts[3])));
        prop_assert!(transforms_close(&whole, &left, 1e-9));
        prop_assert!(transforms_close(&whole, &right, 1e-9));
        let back = chain_pose(&g, &["I", "S", "A", "H", "W"], 0.0).unwrap();
        prop_assert!(transforms_close(&whole.compose(&back), &RigidTransform::identity(), 1e-9));
    }

    #[test]
    fn trajectory_error_ignores_common_motion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let unit = |r: &mut ChaCha8Rng| random_rotation(r) * Vector3::z();
        let planned = Trajectory::new(random_points(&mut r, 1, 100.0)[0], unit(&mut r));
        let executed = Trajectory::new(random_points(&mut r, 1, 100.0)[0], unit(&mut r));
        let g = random_transform(&mut r, 300.0);
        let a = trajectory_error(&planned, &executed).unwrap();
        let b = trajectory_error(&planned.transformed(&g), &executed.transformed(&g)).unwrap();
        prop_assert!((a.translation_mm - b.translation_mm).abs() < 1e-9);
        prop_assert!((a.angle_deg - b.angle_deg).abs() < 1e-9);
    }

    #[test]
    fn blob_shift_moves_centroid(k in 0usize..40, l in 0usize..40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let pts = random_points(&mut r, 12, 4.0);
        let draw = |du: usize, dv: usize| {
            let mut mask = Mask::new(64, 64);
            let mut img = vec![0u16; 64 * 64];
            for (i, p) in pts.iter().enumerate() {
                let (u, v) = ((p.x + 8.0) as usize + du, (p.y + 8.0) as usize + dv);
                mask.set(u, v, true);
                img[v * 64 + u] = img[v * 64 + u].max(600 + 37 * i as u16);
            }
            extract_blobs(&mask, Some(&img), 1, 10_000, Connectivity::Eight, 499)
        };
        let a = draw(0, 0);
        let b = draw(k, l);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y.centroid.u - x.centroid.u - k as f64).abs() < 1e-9);
            prop_assert!((y.centroid.v - x.centroid.v - l as f64).abs() < 1e-9);
            prop_assert_eq!(x.area, y.area);
        }
    }

    #[test]
    fn raising_min_area_never_adds_blobs(bits in prop::collection::vec(any::<bool>(), 400), lo in 1usize..6, step in 0usize..6) {
        let mask = Mask { width: 20, height: 20, data: bits };
        let a = extract_blobs(&mask, None, lo, 400, Connectivity::Four, 0).len();
        let b = extract_blobs(&mask, None, lo + step, 400, Connectivity::Four, 0).len();
        prop_assert!(b <= a);
    }

    #[test]
    fn latency_ignores_constant_offset(delay in 0.0..0.4f64, offset in -200.0..200.0f64) {
        let reference = synthetic_trace(2.0, 40.0, 100.0, 8.0, 0.0, 0.0, 0.0, 1);
        let test = synthetic_trace(2.0, 40.0, 100.0, 8.0, delay, 0.0, 0.0, 1);
        let shifted = MotionTrace::new(test.t.clone(), test.x.iter().map(|x| x + offset).collect()).unwrap();
        let a = estimate_latency(&reference, &test, 1.0).unwrap();
        let b = estimate_latency(&reference, &shifted, 1.0).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matching_equals_brute_force(seed in any::<u64>(), strays in 0usize..4, t_side in 0.3..4.0f64) {
        let mut r = rng(seed);
        let tool = random_tool(&mut r, "t", 4, 50.0);
        let pose = random_transform(&mut r, 100.0);
        let mut dets: Vec<Point3> = tool.markers().iter().map(|p| jitter(&mut r, &pose.apply(p), 0.3)).collect();
        dets.extend(random_points(&mut r, strays, 120.0));
        dets.shuffle(&mut r);
        let t_shape = t_side / 12f64.sqrt();
        let fast: Vec<(Vec<usize>, f64)> = find_candidates(&tool, &dets, t_side, t_shape)
            .into_iter()
            .map(|c| (c.assignment, c.loss))
            .collect();
        prop_assert_eq!(fast, brute_force_candidates(&tool, &dets, t_side, t_shape));
    }

    #[test]
    fn rigid_motion_moves_poses(seed in any::<u64>()) {
        let mut r = rng(seed);
        let tools = standard_tools();
        let mut points = Vec::new();
        for (k, tool) in tools.iter().take(3).enumerate() {
            let pose = RigidTransform::from_axis_angle(&Vector3::new(0.3, 1.0, 0.2), 0.4 * k as f64, Vector3::new(150.0 * k as f64 - 150.0, 0.0, 600.0));
            points.extend(tool.markers().iter().map(|p| pose.apply(p)));
        }
        let cfg = TrackerConfig { noise: NoiseModel::constant(0.3), kalman: false, ..TrackerConfig::default() };
        let obs = |pts: &[Point3]| {
            let dets: Vec<DetectedMarker> = pts.iter().map(|p| DetectedMarker::from_point(*p, 5.75)).collect();
            Tracker::new(tools.clone(), cfg.clone()).track_frame(&dets, 0.0)
        };
        let g = random_transform(&mut r, 100.0);
        let moved: Vec<Point3> = points.iter().map(|p| g.apply(p)).collect();
        let a = obs(&points);
        let b = obs(&moved);
        prop_assert_eq!(a.len(), 3);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.tool, &y.tool);
            prop_assert!((x.loss - y.loss).abs() < 1e-9);
            prop_assert!(transforms_close(&g.compose(&x.pose), &y.pose, 1e-7));
        }
    }

    #[test]
    fn detection_order_is_irrelevant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let tools = standard_tools();
        let mut points = Vec::new();
        for (k, tool) in tools.iter().enumerate() {
            let pose = random_transform(&mut r, 10.0).compose(&RigidTransform::identity());
            let at = RigidTransform::from_translation(Vector3::new(160.0 * (k as f64 - 2.0), 0.0, 600.0));
            points.extend(tool.markers().iter().map(|p| jitter(&mut r, &at.compose(&pose).apply(p), 0.2)));
        }
        points.extend(random_points(&mut r, 3, 300.0).into_iter().map(|p| Point3::new(p.x, p.y, p.z + 600.0)));
        let dets: Vec<DetectedMarker> = points.iter().map(|p| DetectedMarker::from_point(*p, 5.75)).collect();
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.shuffle(&mut r);
        let shuffled: Vec<DetectedMarker> = order.iter().map(|&i| dets[i].clone()).collect();
        let tracker = Tracker::new(tools.clone(), TrackerConfig::default());
        let resolved = |d: &[DetectedMarker], map: &dyn Fn(usize) -> usize| {
            let mut v: Vec<(usize, Vec<usize>)> = tracker
                .match_frame(d)
                .into_iter()
                .map(|c| (c.tool, c.assignment.iter().map(|&i| map(i)).collect()))
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(resolved(&dets, &|i| i), resolved(&shuffled, &|i| order[i]));
    }

    #[test]
    fn definition_ignores_common_motion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let tool = random_tool(&mut r, "t", 4, 40.0);
        let frames: Vec<Vec<Point3>> = (0..12)
            .map(|_| {
                let pose = random_transform(&mut r, 200.0);
                tool.markers().iter().map(|p| jitter(&mut r, &pose.apply(p), 0.2)).collect()
            })
            .collect();
        let g = random_transform(&mut r, 300.0);
        let define = |fs: &[Vec<Point3>]| {
            let mut s = DefinitionSession::new(fs[0].clone(), 1.0).unwrap();
            for f in &fs[1..] {
                s.push(f.clone());
            }
            define_tool(&s, "t", 5.75).unwrap()
        };
        let a = define(&frames);
        let moved: Vec<Vec<Point3>> = frames.iter().map(|f| f.iter().map(|p| g.apply(p)).collect()).collect();
        let b = define(&moved);
        prop_assert!(rigid_register(a.markers(), b.markers()).unwrap().rmse < 1e-6);
        let sum = a.markers().iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        prop_assert!(sum.norm() < 1e-9);
        prop_assert!(shape_distance(a.markers(), a.markers()).unwrap() == 0.0);
    }

    #[test]
    fn render_is_deterministic_and_round_trips(seed in any::<u64>(), quantize in any::<bool>()) {
        let tool = standard_tools().remove(1);
        let pose = RigidTransform::from_axis_angle(&Vector3::new(1.0, 0.0, 0.0), 0.3, Vector3::new(20.0, -10.0, 480.0));
        let scene = single_tool_scene(&tool, pose);
        let intr = CameraIntrinsics::with_fov(96, 96, 100.0).unwrap();
        let opts = RenderOptions { timestamp: 0.25, quantize, window: None };
        let a = render_frame_with(&scene, &intr, &NoiseModel::default(), seed, &opts).unwrap();
        let b = render_frame_with(&scene, &intr, &NoiseModel::default(), seed, &opts).unwrap();
        prop_assert_eq!(&a, &b);
        if quantize {
            let mut buf = Vec::new();
            write_ahf(&mut buf, &a).unwrap();
            let back = read_ahf_stream(&buf[..], "mem").unwrap();
            prop_assert_eq!(back, vec![a]);
        }
    }
}

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use irtrack::detection::{localize_markers, DetectionConfig};
use irtrack::eval::gating::{gating_monte_carlo, GatingConfig};
use irtrack::eval::Rig;
use irtrack::fixtures::{grid_scene, standard_tools};
use irtrack::par::Parallelism;
use irtrack::sensor::{render_frame, NoiseModel};
use irtrack::tracking::{Tracker, TrackerConfig};
use irtrack::CameraIntrinsics;

fn modes() -> Vec<(&'static str, Parallelism)> {
    let mut m = vec![("sequential", Parallelism::Sequential)];
    if cfg!(feature = "parallel") {
        m.push(("parallel", Parallelism::Parallel));
    }
    m
}

fn track_frame(c: &mut Criterion) {
    let intr = CameraIntrinsics::default_sensor();
    let mut group = c.benchmark_group("track_frame");
    for n in [1, 5] {
        let frame = render_frame(&grid_scene(n, 550.0), &intr, &NoiseModel::default(), 1).unwrap();
        let dets = localize_markers(&frame, &DetectionConfig::default()).unwrap();
        for (name, mode) in modes() {
            let cfg = TrackerConfig { parallelism: mode, ..TrackerConfig::default() };
            let mut tracker = Tracker::new(standard_tools().into_iter().take(n).collect(), cfg);
            group.bench_with_input(BenchmarkId::new(name, n), &dets, |b, d| b.iter(|| tracker.track_frame(d, 0.0)));
        }
    }
    group.finish();
}

fn render_and_detect(c: &mut Criterion) {
    let intr = CameraIntrinsics::default_sensor();
    let scene = grid_scene(5, 550.0);
    c.bench_function("render_detect_5_tools", |b| {
        b.iter(|| {
            let f = render_frame(&scene, &intr, &NoiseModel::default(), 3).unwrap();
            localize_markers(&f, &DetectionConfig::default()).unwrap()
        })
    });
}

fn monte_carlo(c: &mut Criterion) {
    let rig = Rig::default();
    let tool = standard_tools().remove(0);
    let cfg = GatingConfig { frames: 64, ..GatingConfig::default() };
    let mut group = c.benchmark_group("gating_64_frames");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_function(name, |b| b.iter(|| gating_monte_carlo(&rig, &tool, &cfg, 5, mode).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, track_frame, render_and_detect, monte_carlo);
criterion_main!(benches);

//! Parallel against sequential execution of the classical and simulated pipelines.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qcurv_core::config::RunConfig;
use qcurv_core::geometry::estimate_all_with;
use qcurv_core::pointcloud::{generate_manifold, pairwise_distances_with, GeneratorParams, ManifoldKind};
use qcurv_core::qsim::run_pipeline;
use qcurv_core::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sphere(n: usize) -> qcurv_core::pointcloud::PointCloud {
    generate_manifold(ManifoldKind::Sphere, n, &GeneratorParams::default(), 0.01, 7).unwrap()
}

fn distances(c: &mut Criterion) {
    let cloud = sphere(2000);
    let mut group = c.benchmark_group("distances_2000");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| pairwise_distances_with(&cloud, exec)));
    }
    group.finish();
}

fn estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    let config = RunConfig::default();
    for n in [500, 1000] {
        let cloud = sphere(n);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &cloud, |b, cloud| {
                b.iter(|| estimate_all_with(cloud, &config, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn simulated(c: &mut Criterion) {
    let mut group = c.benchmark_group("qsim_pipeline_16");
    group.sample_size(10);
    let cloud = sphere(16);
    let config = RunConfig { nn: 5, ..RunConfig::default() };
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_pipeline(&cloud, &config, None, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, distances, estimate, simulated);
criterion_main!(benches);

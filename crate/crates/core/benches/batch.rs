//! Sequential versus rayon execution for the two batch workloads: many
//! independent trajectories, and a Newton sweep over a seed grid.

use std::f64::consts::TAU;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gradlab_core::catalog;
use gradlab_core::critical::{sweep_critical, Region};
use gradlab_core::flow::integrate_many;
use gradlab_core::{Execution, IntegratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn trajectories(c: &mut Criterion) {
    let f = catalog::field("torus_height").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let starts: Vec<Vec<f64>> =
        (0..256).map(|_| vec![rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)]).collect();
    let cfg = IntegratorConfig::default();
    let mut group = c.benchmark_group("integrate_many/torus_256");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| integrate_many(&f, &starts, &cfg, exec))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let f = catalog::field("torus_height").unwrap();
    let region = Region::new(vec![0.0, 0.0], vec![TAU, TAU]).unwrap();
    let mut group = c.benchmark_group("sweep_critical/torus_32x32");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep_critical(&f, &region, &[32, 32], 1e-12, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = trajectories, sweep
}
criterion_main!(benches);

//! Thread-pool versus single-thread timings for the data-parallel kernels.
//!
//! Each group runs the same call under `with_threads(1, ..)` and under the
//! default pool. Build with `--no-default-features` to time the sequential
//! fallback without rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hnko_core::eval::wasserstein2;
use hnko_core::model::{HnkoModel, LossWeights, ModelConfig};
use hnko_core::numerics::matmul;
use hnko_core::par::with_threads;
use hnko_core::rng::{normal_matrix, Rng64, SeedableRng};
use hnko_core::systems::{simulate, simulate_batch, SystemSpec};

fn modes() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("sequential", 1), ("parallel", all)]
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = Rng64::seed_from_u64(1);
    let mut g = c.benchmark_group("matmul");
    for n in [128usize, 512] {
        let a = normal_matrix(&mut rng, n, n, 1.0);
        let b = normal_matrix(&mut rng, n, n, 1.0);
        for (mode, threads) in modes() {
            g.bench_with_input(BenchmarkId::new(mode, n), &n, |bch, _| {
                bch.iter(|| with_threads(threads, || matmul(black_box(&a), black_box(&b)).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_simulate_batch(c: &mut Criterion) {
    let spec = SystemSpec::Kepler { m: 1.0, g: 1.0 };
    let starts: Vec<Vec<f64>> = (0..16).map(|i| vec![1.0 + 0.02 * i as f64, 0.0, 0.0, 1.0]).collect();
    let mut g = c.benchmark_group("simulate_batch");
    g.sample_size(10);
    for (mode, threads) in modes() {
        g.bench_function(mode, |b| b.iter(|| with_threads(threads, || simulate_batch(&spec, black_box(&starts), 0.1, 500).unwrap())));
    }
    g.finish();
}

fn bench_wasserstein(c: &mut Criterion) {
    let mut rng = Rng64::seed_from_u64(2);
    let a = normal_matrix(&mut rng, 400, 4, 1.0);
    let b = normal_matrix(&mut rng, 400, 4, 1.0);
    let mut g = c.benchmark_group("wasserstein2");
    g.sample_size(10);
    for (mode, threads) in modes() {
        g.bench_function(mode, |bch| bch.iter(|| with_threads(threads, || wasserstein2(black_box(&a), black_box(&b)).unwrap())));
    }
    g.finish();
}

fn bench_epoch(c: &mut Criterion) {
    let spec = SystemSpec::Kepler { m: 1.0, g: 1.0 };
    let data = vec![simulate(&spec, &[1.0, 0.0, 0.0, 1.0], 0.1, 200).unwrap()];
    let mut rng = Rng64::seed_from_u64(3);
    let cfg = ModelConfig {
        hidden: vec![64, 64],
        ..ModelConfig::new(16, 7)
    };
    let model = HnkoModel::init(&cfg, &data, vec![1.0; 4], &mut rng).unwrap();
    let w = LossWeights::default();
    let mut g = c.benchmark_group("loss_and_gradient");
    g.sample_size(20);
    for (mode, threads) in modes() {
        g.bench_function(mode, |b| b.iter(|| with_threads(threads, || model.loss_and_gradient(black_box(&data), &w).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, bench_matmul, bench_simulate_batch, bench_wasserstein, bench_epoch);
criterion_main!(benches);

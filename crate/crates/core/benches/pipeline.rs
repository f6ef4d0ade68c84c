use std::hint::black_box;

use combnode::par::Execution;
use combnode::tune::{tune_with, SearchSpace};
use combnode::graph::generate_synthetic;
use combnode::{predict, HyperParams, StatsConfig, SynthConfig, TrainStats};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn setup(n: usize) -> (combnode::Graph, combnode::SplitSpec) {
    generate_synthetic(&SynthConfig {
        n,
        num_classes: 5,
        dim: 32,
        p_in: 0.01,
        p_out: 0.04,
        feature_noise: 1.0,
        seed: 7,
        features: Default::default(),
    })
    .unwrap()
}

fn tuning(c: &mut Criterion) {
    let (g, split) = setup(183);
    let g = g.mask_labels(&split.train);
    let space = SearchSpace {
        budget: 50,
        ..SearchSpace::default()
    };
    let mut group = c.benchmark_group("tune");
    group.sample_size(10);
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_function(BenchmarkId::new(name, space.budget), |b| {
            b.iter(|| tune_with(black_box(&g), &split.train, &space, StatsConfig::default(), exec).unwrap())
        });
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    for n in [183, 2000] {
        let (g, split) = setup(n);
        let g = g.mask_labels(&split.train);
        let stats = TrainStats::build(&g, &split.train, StatsConfig::default()).unwrap();
        let hp = HyperParams::default();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| predict(black_box(&g), &split.train, &split.test, &hp, &stats).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, tuning, inference);
criterion_main!(benches);

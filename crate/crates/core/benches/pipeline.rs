use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lmtune::dataset::{build_dataset_with, SamplingSpec};
use lmtune::forest::{train_with, Hyperparams};
use lmtune::{DeviceDescriptor, Execution};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn spec() -> SamplingSpec {
    SamplingSpec { num_tuples: 20, max_instances: 5_000, ..Default::default() }
}

fn labeling(c: &mut Criterion) {
    let dev = DeviceDescriptor::default();
    let spec = spec();
    let mut group = c.benchmark_group("build_dataset");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| build_dataset_with(black_box(&spec), &dev, exec).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let dev = DeviceDescriptor::default();
    let rows = build_dataset_with(&spec(), &dev, Execution::Parallel).unwrap().rows;
    let hp = Hyperparams::default();
    let mut group = c.benchmark_group("train_forest");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_with(black_box(&rows), &hp, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, labeling, training);
criterion_main!(benches);

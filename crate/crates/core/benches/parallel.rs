//! Data-parallel hot paths against their single-threaded counterparts.
//!
//! `map_indexed` vs `map_indexed_seq` isolates the fan-out itself; the
//! pipeline benches run the same call inside a one-thread pool and on the
//! global pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unlearn_core::dataset::{generate_toy, LabeledDataset, ToySpec};
use unlearn_core::model::{evaluate, train_sgd, Architecture, Classifier, TrainConfig};
use unlearn_core::par;
use unlearn_core::poison::{errmax_noise, ErrMaxConfig, PerturbationBudget};
use unlearn_core::rng::SeededRng;
use unlearn_core::transforms::{expand_dataset, Augmentation};

fn fixture() -> (LabeledDataset, Classifier) {
    let spec = ToySpec { train: 256, val: 10, test: 10, contrast: 0.5, ..ToySpec::default() };
    let (train, _, _) = generate_toy(&spec).unwrap();
    let init = Classifier::new(Architecture::mlp(), train.dims(), 10, &mut SeededRng::new(1)).unwrap();
    // errmax refuses an untrained surrogate.
    let cfg = TrainConfig { lr: 0.05, epochs: 10, ..TrainConfig::default() };
    (train.clone(), train_sgd(&init, &train, &cfg).unwrap().model)
}

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    [("1-thread", one), ("all-threads", all)]
}

fn fan_out(c: &mut Criterion) {
    let (train, model) = fixture();
    let grads = |i: usize| model.grad_input(train.images()[i].pixels(), train.labels()[i]).unwrap().0;
    let mut g = c.benchmark_group("input_gradients");
    g.bench_function("map_indexed", |b| b.iter(|| par::map_indexed(train.len(), grads)));
    g.bench_function("map_indexed_seq", |b| b.iter(|| par::map_indexed_seq(train.len(), grads)));
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let (train, model) = fixture();
    let budget = PerturbationBudget::new(8.0 / 255.0).unwrap();
    let pgd = ErrMaxConfig { steps: 3, ..ErrMaxConfig::default() };
    let space: Vec<Augmentation> =
        ["erode(kernel=3x3,iter=1)", "blur(kernel=5x5,sigma=1)"].iter().map(|s| s.parse().unwrap()).collect();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("errmax_pgd", name), &pool, |b, p| {
            b.iter(|| p.install(|| errmax_noise(&model, &train, budget, &pgd).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("evaluate", name), &pool, |b, p| {
            b.iter(|| p.install(|| evaluate(&model, &train).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("expand_dataset", name), &pool, |b, p| {
            b.iter(|| p.install(|| expand_dataset(&train, &space, true).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, fan_out, pipeline);
criterion_main!(benches);

use std::path::PathBuf;

use candle_core::{Device, Tensor};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ensemble_dr::dataset::stratified_split;
use ensemble_dr::ensemble::global_average_pool;
use ensemble_dr::{build_ensemble, compute_metrics, DatasetManifest, EnsembleConfig, ImageRecord, Mode, Split};

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y: Vec<usize> = (0..1207).map(|_| rng.gen_range(0..5)).collect();
    let p: Vec<usize> = y.iter().map(|&t| if rng.gen_bool(0.9) { t } else { rng.gen_range(0..5) }).collect();
    c.bench_function("compute_metrics/1207", |b| b.iter(|| compute_metrics(&y, &p).unwrap()));
}

fn split(c: &mut Criterion) {
    let counts = [1805, 1624, 999, 834, 772];
    let records = counts
        .iter()
        .enumerate()
        .flat_map(|(label, &n)| {
            (0..n).map(move |i| {
                let id = format!("{label}_{i:04}");
                ImageRecord { path: PathBuf::from(&id), image_id: id, label, split: Split::Unassigned }
            })
        })
        .collect();
    let names = ensemble_dr::DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let manifest = DatasetManifest::from_records(records, names).unwrap();
    c.bench_function("stratified_split/6034", |b| b.iter(|| stratified_split(&manifest, 0.2, 1).unwrap()));
}

fn pooling(c: &mut Criterion) {
    let x = Tensor::rand(0f32, 1.0, (16, 7, 7, 512), &Device::Cpu).unwrap();
    c.bench_function("global_average_pool/16x7x7x512", |b| b.iter(|| global_average_pool(&x).unwrap()));
}

fn tiny_forward(c: &mut Criterion) {
    let model = build_ensemble(&EnsembleConfig::tiny(), 0).unwrap();
    let mut group = c.benchmark_group("tiny_ensemble");
    group.sample_size(10);
    group.bench_function("infer/4", |b| {
        b.iter_batched(
            || Tensor::rand(0f32, 1.0, (4, 224, 224, 3), &Device::Cpu).unwrap(),
            |x| model.forward(&x, Mode::Infer).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, metrics, split, pooling, tiny_forward);
criterion_main!(benches);

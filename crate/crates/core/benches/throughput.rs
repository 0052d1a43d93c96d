use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sqlbalance::evalharness::{score_dataset, LfMode};
use sqlbalance::parallel::Parallelism;
use sqlbalance::parser::{predict_dataset, train, ParserConfig, TrainConfig};
use sqlbalance::synth::generate_splits;

fn modes() -> [(&'static str, Parallelism); 2] {
    [
        ("sequential", Parallelism::Sequential),
        ("parallel", Parallelism::Parallel),
    ]
}

fn bench(c: &mut Criterion) {
    let (train_ds, test_ds) = generate_splits(2_000, 4_000, 0.14, 1);
    let models = train(
        &train_ds,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        &ParserConfig::default(),
    )
    .expect("training succeeds");
    let preds = predict_dataset(&test_ds, &models, Parallelism::Parallel);

    let mut g = c.benchmark_group("predict");
    g.throughput(Throughput::Elements(test_ds.len() as u64));
    g.sample_size(10);
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| predict_dataset(&test_ds, &models, mode))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("score");
    g.throughput(Throughput::Elements(test_ds.len() as u64));
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| score_dataset(&preds, &test_ds, LfMode::default(), mode).expect("aligned"))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

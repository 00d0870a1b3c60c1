use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use variance_forge_bench::fresh_evaluator;
use variance_forge_core::metrics::c_cdd;
use variance_forge_core::net::{backward, forward, init_parameters, train};
use variance_forge_core::presets::{standard_model_config, standard_split, standard_train_config};
use variance_forge_core::search::{search_sway, SearchBudget, SwayConfig};

fn net(c: &mut Criterion) {
    let split = standard_split().unwrap();
    let model = standard_model_config();
    let params = init_parameters(&model).unwrap();
    let x = split.train.features();
    let y = split.train.labels();

    c.bench_function("forward/train_split", |b| {
        b.iter(|| forward(black_box(&params), x).unwrap())
    });
    c.bench_function("backward/train_split", |b| {
        b.iter(|| backward(black_box(&params), x, y).unwrap())
    });
    c.bench_function("train/standard", |b| {
        b.iter(|| train(x, y, &model, &standard_train_config()).unwrap())
    });
    let trained = train(x, y, &model, &standard_train_config()).unwrap();
    c.bench_function("c_cdd/test_split", |b| {
        b.iter(|| c_cdd(black_box(&trained), split.test.features(), split.test.labels()).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    group.bench_function("pool/sequential", |b| {
        b.iter(|| fresh_evaluator().unwrap().evaluate_pool().unwrap())
    });
    group.bench_function("pool/4_threads", |b| {
        b.iter(|| fresh_evaluator().unwrap().with_parallelism(4).evaluate_pool().unwrap())
    });
    group.bench_function("sway/default", |b| {
        b.iter(|| {
            let ev = fresh_evaluator().unwrap();
            search_sway(&ev, &SwayConfig::default(), &SearchBudget::evaluations(27).unwrap()).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, net, evaluation);
criterion_main!(benches);

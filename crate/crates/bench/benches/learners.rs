use bombus_bench::{bee_table, regression_data};
use bombus_core::abc::{Calibrator, Method, MethodConfig};
use bombus_core::mlkit::{wls_fit, BoostedModel, Forest, ForestParams, GbmParams, Loss, NeuralFit, NnParams};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn learners(c: &mut Criterion) {
    let (x, y) = regression_data(500, 40, 1);
    let w = vec![1.0; y.len()];
    let mut g = c.benchmark_group("learners_500x40");
    g.sample_size(10);
    g.bench_function("wls", |b| b.iter(|| wls_fit(black_box(&x), &y, &w).unwrap()));
    let forest = ForestParams {
        trees: 100,
        ..ForestParams::default()
    };
    g.bench_function("forest_100", |b| b.iter(|| Forest::fit(black_box(&x), &y, None, &forest, 3).unwrap()));
    let gbm = GbmParams {
        stages: 100,
        ..GbmParams::default()
    };
    g.bench_function("gbm_pinball_100", |b| {
        b.iter(|| BoostedModel::fit(black_box(&x), &y, None, Loss::Pinball { alpha: 0.9 }, &gbm, 3).unwrap())
    });
    let nn = NnParams {
        epochs: 200,
        ..NnParams::default()
    };
    let ym = bombus_core::mlkit::Matrix::from_rows(&y.iter().map(|v| vec![*v]).collect::<Vec<_>>());
    g.bench_function("nn_200_epochs", |b| b.iter(|| NeuralFit::fit(black_box(&x), &ym, &w, &nn, 3).unwrap()));
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let table = bee_table(2000);
    let observed = table.stats.row(0).to_vec();
    let cal = Calibrator::new(table, MethodConfig::default(), 1).unwrap();
    let mut g = c.benchmark_group("calibrate_2000");
    g.sample_size(10);
    for m in [Method::Rejection, Method::LocLh] {
        g.bench_function(m.tag(), |b| b.iter(|| cal.run(m, black_box(&observed), 0.05).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, learners, calibration);
criterion_main!(benches);

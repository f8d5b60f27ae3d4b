use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bbsm_core::calibrate::kde::{default_bandwidth, kde_compare};
use bbsm_core::calibrate::simulate_stock;
use bbsm_core::csyip::{price_changes, simulate_market_index, MarketIndexParams};
use bbsm_core::{build_csy_path, fit_risky_params, FilterKind, FitOptions, RiskyParams};

fn index_params() -> MarketIndexParams {
    MarketIndexParams {
        a: 0.02,
        mu: 3e-4,
        v: 0.5,
        sigma: 0.01,
        p0: 0.524,
        p1: 0.0,
        p2: 0.0,
        a0: 100.0,
    }
}

fn risky_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_risky_params");
    for n in [500usize, 2000] {
        let index = simulate_market_index(&index_params(), n, 1.0, 3).unwrap();
        let path = build_csy_path(&index, &FilterKind::Power { d: 10.0 }, 1.0).unwrap();
        let stock = simulate_stock(&RiskyParams::new(0.05, 2e-4, 0.4, 8e-3, 0.17), 24.0, &path, 0.01, 4);
        let changes = price_changes(&stock).unwrap();
        let lagged = stock.values()[..stock.len() - 1].to_vec();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| fit_risky_params(black_box(&changes), &lagged, &path, 1.0, &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn csy_path(c: &mut Criterion) {
    let index = simulate_market_index(&index_params(), 2000, 1.0, 3).unwrap();
    c.bench_function("build_csy_path/2000", |b| {
        b.iter(|| build_csy_path(black_box(&index), &FilterKind::Gaussian { sigma_h: 1.0 }, 1.0).unwrap())
    });
}

fn kde(c: &mut Criterion) {
    let index = simulate_market_index(&index_params(), 2000, 1.0, 5).unwrap();
    let empirical = price_changes(&index).unwrap().change;
    let model: Vec<f64> = empirical.iter().map(|x| 0.9 * x).collect();
    let bw = default_bandwidth(&empirical);
    c.bench_function("kde_compare/2000", |b| {
        b.iter(|| kde_compare(black_box(&empirical), &model, bw).unwrap())
    });
}

criterion_group!(benches, risky_fit, csy_path, kde);
criterion_main!(benches);

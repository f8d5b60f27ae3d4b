use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bbsm_core::pricer::price_many;
use bbsm_core::{FilterKind, OptionContract, PricingConfig, RisklessParams, RiskyParams};

const STRIKES: [f64; 8] = [20.0, 21.0, 22.0, 23.0, 24.0, 25.0, 26.0, 27.0];

fn setup(split_depth: usize) -> (RiskyParams, RisklessParams, PricingConfig) {
    let params = RiskyParams::new(0.05, 2e-4, 0.4, 8e-3, 0.17);
    let riskless = RisklessParams::new(1e-4, 1.5e-4);
    let cfg = PricingConfig::new(1.0, 0.52, 0.3, FilterKind::Power { d: 10.0 }, 24.0, &riskless, 26)
        .with_split_depth(split_depth);
    (params, riskless, cfg)
}

fn single_vs_multi(c: &mut Criterion) {
    let mut group = c.benchmark_group("strikes");
    group.sample_size(10);
    let (params, riskless, cfg) = setup(4);
    for t in [16usize, 20] {
        let one = [OptionContract::call(24.0, t)];
        let many: Vec<OptionContract> = STRIKES.iter().map(|k| OptionContract::call(*k, t)).collect();
        group.bench_with_input(BenchmarkId::new("one", t), &one, |b, o| {
            b.iter(|| price_many(black_box(o), &params, &riskless, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("eight", t), &many, |b, o| {
            b.iter(|| price_many(black_box(o), &params, &riskless, &cfg).unwrap())
        });
    }
    group.finish();
}

fn split_depth(c: &mut Criterion) {
    let mut group = c.benchmark_group("split_depth");
    group.sample_size(10);
    let opts = [OptionContract::call(24.0, 20)];
    for depth in [0usize, 2, 4, 8] {
        let (params, riskless, cfg) = setup(depth);
        group.bench_with_input(BenchmarkId::from_parameter(depth), &opts, |b, o| {
            b.iter(|| price_many(black_box(o), &params, &riskless, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, single_vs_multi, split_depth);
criterion_main!(benches);

//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use bbsm_core::calibrate::{
    build_beta_series, fit_riskless_params, fit_risky_params, reparameterize, simulate_stock, FitOptions,
    RisklessParams, RiskyParams,
};
use bbsm_core::csyip::{cumulative_path, integral_path, price_changes, CsyPath, FilterKind, SignValues};
use bbsm_core::esg::{esg_adjusted_prices, RelEsgSeries};
use bbsm_core::ingest::{PriceSeries, RateSeries, TradingCalendar};
use bbsm_core::pricer::{
    bachelier_closed_form, bsm_closed_form, enumerate_tree, price_european, price_many, OptionContract, PricingConfig,
};
use chrono::NaiveDate;
use common::{index_path, random_draw, rng, Draw};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn sig_figs(x: f64, n: i32) -> f64 {
    let scale = 10f64.powi(n - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn criterion_1() -> Outcome {
    let sv = SignValues::new(0.524).unwrap();
    let (up, down) = (sig_figs(sv.up, 3), sig_figs(sv.down, 3));
    Outcome::new(
        up == 0.954 && down == 1.05,
        format!(
            "xi_u = {:.6} -> {up} (want 0.954), xi_d = {:.6} -> {down} (want 1.05)",
            sv.up, sv.down
        ),
    )
}

/// Draws until the full maturity-`t` tree is valid under `check`.
fn admissible<T>(seed: u64, t: usize, check: impl Fn(&Draw) -> Option<T>) -> (Draw, T) {
    let mut r = rng(seed);
    loop {
        let d = random_draw(&mut r, t);
        if let Some(v) = check(&d) {
            return (d, v);
        }
    }
}

fn criterion_2() -> Outcome {
    let worst: Vec<(f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let opts = |t| [OptionContract::custom(t, |a| a), OptionContract::custom(t, |_| 1.0)];
            let (d, first) = admissible(1000 + seed, 20, |d| {
                price_many(&opts(20), &d.params, &d.riskless, &d.cfg).ok()
            });
            let mut worst = (0.0f64, 0.0f64);
            for t in [1usize, 5, 10, 20] {
                let res = if t == 20 {
                    first.clone()
                } else {
                    price_many(&opts(t), &d.params, &d.riskless, &d.cfg).unwrap()
                };
                let e_asset = (res[0].price - d.cfg.a0).abs() / d.cfg.a0;
                let bond = d.cfg.beta_path[0] / d.cfg.beta_path[t];
                let e_unit = (res[1].price - bond).abs() / bond;
                worst = (worst.0.max(e_asset), worst.1.max(e_unit));
            }
            worst
        })
        .collect();
    let (ea, eu) = worst.iter().fold((0.0f64, 0.0f64), |a, w| (a.0.max(w.0), a.1.max(w.1)));
    Outcome::new(
        ea <= 1e-10 && eu <= 1e-12,
        format!("max rel err: asset {ea:.2e} (<= 1e-10), unit {eu:.2e} (<= 1e-12)"),
    )
}

fn criterion_3() -> Outcome {
    let errs: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (d, _) = admissible(2000 + seed, 12, |d| {
                price_european(&OptionContract::call(d.cfg.a0, 12), &d.params, &d.riskless, &d.cfg).ok()
            });
            let mut worst = 0.0f64;
            for t in 1..=12 {
                let k = d.cfg.a0 * (0.95 + 0.01 * t as f64);
                for option in [OptionContract::call(k, t), OptionContract::put(k, t)] {
                    let dfs = price_european(&option, &d.params, &d.riskless, &d.cfg).unwrap().price;
                    let full = enumerate_tree(&option, &d.params, &d.riskless, &d.cfg).unwrap().price;
                    let scale = dfs.abs().max(full.abs());
                    if scale > 0.0 {
                        worst = worst.max((dfs - full).abs() / scale);
                    }
                }
            }
            worst
        })
        .collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Outcome::new(worst <= 1e-13, format!("max rel diff {worst:.2e} (<= 1e-13)"))
}

fn criterion_4() -> Outcome {
    let (sigma, r, t) = (0.01, 0.0002, 20);
    let params = RiskyParams::new(0.0, r, 0.0, sigma, 0.0);
    let riskless = RisklessParams::new(0.0, r);
    let cfg = PricingConfig::new(1.0, 0.5, 0.0, FilterKind::default(), 100.0, &riskless, t).with_split_depth(4);
    let tree = price_european(&OptionContract::call(100.0, t), &params, &riskless, &cfg)
        .unwrap()
        .price;
    let exact = bsm_closed_form(100.0, 100.0, t, sigma, r, 1.0).unwrap();
    let err = (tree - exact).abs() / exact;
    Outcome::new(
        err <= 0.015,
        format!(
            "tree {tree:.6}, closed form {exact:.6}, rel err {:.3}% (<= 1.5%)",
            100.0 * err
        ),
    )
}

fn criterion_5() -> Outcome {
    let (v, t) = (1.0, 20);
    let params = RiskyParams::new(0.0, 0.0, v, 0.0, 0.0);
    let riskless = RisklessParams::new(0.0, 0.0);
    let cfg = PricingConfig::new(1.0, 0.5, 0.0, FilterKind::default(), 100.0, &riskless, t).with_split_depth(4);
    let tree = price_european(&OptionContract::call(100.0, t), &params, &riskless, &cfg)
        .unwrap()
        .price;
    let exact = bachelier_closed_form(100.0, 100.0, t, v, 1.0).unwrap();
    let err = (tree - exact).abs() / exact;
    Outcome::new(
        err <= 0.015,
        format!(
            "tree {tree:.6}, closed form {exact:.6}, rel err {:.3}% (<= 1.5%)",
            100.0 * err
        ),
    )
}

fn fit(stock: &PriceSeries, path: &CsyPath) -> bbsm_core::RiskyFit {
    let changes = price_changes(stock).unwrap();
    let lagged = &stock.values()[..stock.len() - 1];
    fit_risky_params(&changes, lagged, path, path.delta, &FitOptions::default()).unwrap()
}

fn as_array(p: &RiskyParams) -> [f64; 5] {
    [p.a, p.mu, p.v, p.sigma, p.gamma]
}

fn criterion_6() -> Outcome {
    let truth = RiskyParams::new(0.05, 2e-4, 0.4, 8e-3, 0.17);
    let path = index_path(2000, 6);
    let clean = fit(&simulate_stock(&truth, 24.0, &path, 0.0, 0), &path);
    let clean_err = as_array(&truth)
        .iter()
        .zip(as_array(&clean.params))
        .map(|(t, g)| ((t - g) / t).abs())
        .fold(0.0, f64::max);

    let covered: Vec<bool> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let path = index_path(2000, 600 + seed);
            let got = fit(&simulate_stock(&truth, 24.0, &path, 0.1, seed), &path);
            as_array(&truth)
                .iter()
                .zip(as_array(&got.params))
                .zip(got.std_errors.as_array())
                .all(|((t, g), se)| (t - g).abs() <= 3.0 * se)
        })
        .collect();
    let rate = covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64;
    Outcome::new(
        clean_err <= 1e-6 && rate >= 0.9,
        format!(
            "noise-free max rel err {clean_err:.2e} (<= 1e-6); all five within 3 SE in {:.0}% of seeds (>= 90%)",
            100.0 * rate
        ),
    )
}

fn criterion_7() -> Outcome {
    let cal = TradingCalendar::business_days(NaiveDate::from_ymd_opt(2019, 1, 2).unwrap(), 400);
    let mut r = rng(7);
    let yields: Vec<f64> = (0..400).map(|_| r.random_range(0.01..0.03)).collect();
    let rates = RateSeries::new(cal, yields).unwrap();
    let fit_at = |b0: f64| {
        let beta = build_beta_series(&rates, b0, 1.0).unwrap();
        fit_riskless_params(&beta, b0, 1.0).unwrap()
    };
    let (base, scaled) = (fit_at(1.0), fit_at(10.0));
    let riskless_err = (base.rho - scaled.rho).abs().max((base.r - scaled.r).abs());

    let truth = RiskyParams::new(0.05, 2e-4, 0.4, 8e-3, 0.17);
    let path = index_path(1500, 71);
    let stock = simulate_stock(&truth, 24.0, &path, 0.05, 3);
    let c = 7.5;
    let scaled_stock =
        PriceSeries::new(stock.calendar().clone(), stock.values().iter().map(|v| v * c).collect()).unwrap();
    let n1 = reparameterize(&fit(&stock, &path).params, 24.0).unwrap();
    let n2 = reparameterize(&fit(&scaled_stock, &path).params, 24.0 * c).unwrap();
    let pairs = [
        (n1.a_over_a0, n2.a_over_a0),
        (n1.mu, n2.mu),
        (n1.v_over_a0, n2.v_over_a0),
        (n1.sigma, n2.sigma),
        (n1.gamma_over_a0, n2.gamma_over_a0),
    ];
    let risky_err = pairs
        .iter()
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max);
    Outcome::new(
        riskless_err <= 1e-10 && risky_err <= 1e-8,
        format!("riskless abs diff {riskless_err:.2e} (<= 1e-10); normalized risky rel diff {risky_err:.2e} (<= 1e-8)"),
    )
}

fn criterion_8() -> Outcome {
    let (m, n) = (10_000usize, 1024usize);
    let delta = 1.0 / n as f64;
    let ends: Vec<(f64, f64)> = (0..m as u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = rng(80_000 + seed);
            let xi: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let x = cumulative_path(&xi, delta);
            let y = integral_path(&xi, &x, &|v: f64| v, delta).unwrap();
            (x[n], y[n])
        })
        .collect();
    let mf = m as f64;
    let mean_x = ends.iter().map(|e| e.0).sum::<f64>() / mf;
    let mean_y = ends.iter().map(|e| e.1).sum::<f64>() / mf;
    let var_x = ends.iter().map(|e| (e.0 - mean_x).powi(2)).sum::<f64>() / (mf - 1.0);
    let var_y = ends.iter().map(|e| (e.1 - mean_y).powi(2)).sum::<f64>() / (mf - 1.0);
    let bound = 3.0 / mf.sqrt();
    Outcome::new(
        mean_x.abs() <= bound && (0.95..=1.05).contains(&var_x) && (0.45..=0.55).contains(&var_y),
        format!(
            "|mean X_1| = {:.4} (<= {bound:.4}), Var X_1 = {var_x:.4}, Var Y_1 = {var_y:.4}",
            mean_x.abs()
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

fn criterion_9() -> Outcome {
    let mut worst = [0.0f64; 3];
    for seed in 0..200u64 {
        let mut r = rng(9000 + seed);
        let n = r.random_range(2..500);
        let cal = TradingCalendar::business_days(NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), n);
        let s: Vec<f64> = (0..n).map(|_| r.random_range(5.0..300.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
        let gamma = r.random_range(-1.0..1.0);
        let fin = PriceSeries::new(cal.clone(), s.clone()).unwrap();
        let rel = RelEsgSeries {
            calendar: cal,
            rel: z.clone(),
        };
        let a = esg_adjusted_prices(&fin, &rel, gamma).unwrap();
        let a = a.values();
        let sz: Vec<f64> = s.iter().zip(&z).map(|(x, y)| x * y).collect();

        let lhs = mean(a);
        let rhs = mean(&s) + gamma * mean(&sz);
        worst[0] = worst[0].max((lhs - rhs).abs() / lhs.abs());

        let lhs = cov(a, a);
        let rhs = cov(&s, &s) + 2.0 * gamma * cov(&s, &sz) + gamma * gamma * cov(&sz, &sz);
        worst[1] = worst[1].max((lhs - rhs).abs() / lhs.abs().max(1.0));

        for t in 0..n - 1 {
            let lhs = a[t + 1] - a[t];
            let rhs = s[t + 1] - s[t] + gamma * (sz[t + 1] - sz[t]);
            worst[2] = worst[2].max((lhs - rhs).abs() / a[t].abs().max(a[t + 1].abs()));
        }
    }
    Outcome::new(
        worst.iter().all(|w| *w <= 1e-12),
        format!(
            "max rel residual: mean {:.1e}, variance {:.1e}, difference {:.1e} (<= 1e-12)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_10() -> Outcome {
    let params = RiskyParams::new(0.01, 1e-4, 0.5, 0.01, 0.1);
    let riskless = RisklessParams::new(0.0, 0.0002);
    let base = PricingConfig::new(1.0, 0.52, 1.0, FilterKind::default(), 100.0, &riskless, 26);
    let mut peaks = Vec::new();
    let mut pass = true;
    for t in [10usize, 20] {
        let res = price_european(&OptionContract::call(100.0, t), &params, &riskless, &base).unwrap();
        pass &= res.stats.peak_live_frames <= t + 1;
        peaks.push(format!("T={t}: {}", res.stats.peak_live_frames));
    }
    let start = Instant::now();
    let single = price_european(&OptionContract::call(100.0, 24), &params, &riskless, &base).unwrap();
    let single_time = start.elapsed();
    pass &= single.stats.peak_live_frames <= 25 && single_time < Duration::from_secs(60);
    peaks.push(format!("T=24: {}", single.stats.peak_live_frames));

    let strikes: Vec<OptionContract> = (0..10)
        .map(|i| OptionContract::call(80.0 + 4.0 * i as f64, 24))
        .collect();
    let start = Instant::now();
    let surface = price_many(&strikes, &params, &riskless, &base.clone().with_split_depth(4)).unwrap();
    let surface_time = start.elapsed();
    pass &= surface_time < Duration::from_secs(90) && surface.iter().all(|r| r.price.is_finite());
    pass &= surface[0].stats.peak_live_frames <= 25;
    Outcome::new(
        pass,
        format!(
            "peak frames {}; T=24 single strike {:.2}s (< 60s), 10-strike surface {:.2}s (< 90s)",
            peaks.join(", "),
            single_time.as_secs_f64(),
            surface_time.as_secs_f64()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("Bernoulli sign values", criterion_1, Duration::from_millis(1)),
        ("replication identity", criterion_2, Duration::from_secs(30)),
        ("DFS vs enumerated tree", criterion_3, Duration::from_secs(60)),
        ("BSM limit", criterion_4, Duration::from_secs(10)),
        ("Bachelier limit", criterion_5, Duration::from_secs(10)),
        ("parameter recovery", criterion_6, Duration::from_secs(120)),
        ("scaling invariance", criterion_7, Duration::MAX),
        ("CSYIP convergence", criterion_8, Duration::from_secs(60)),
        ("ESG identities", criterion_9, Duration::MAX),
        ("memory contract", criterion_10, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if *budget == Duration::MAX {
            String::new()
        } else {
            format!(", budget {budget:?}")
        };
        println!(
            "criterion {:>2} {} {name}: {} [{elapsed:.2?}{budget}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

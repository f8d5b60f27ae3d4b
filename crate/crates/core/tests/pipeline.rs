//! File-to-price run over synthetic data with a known generator.

use std::fs::File;
use std::path::Path;

use bbsm_core::calibrate::{
    build_beta_series, fit_riskless_params, fit_risky_params, simulate_stock, FitOptions, RiskyParams,
};
use bbsm_core::csyip::{build_csy_path, price_changes, simulate_market_index, FilterKind, MarketIndexParams};
use bbsm_core::esg::{esg_adjusted_prices, index_esg, interpolate_esg_daily, relative_esg, SmootherConfig};
use bbsm_core::ingest::{
    align_calendars, load_esg_fiscal_scores, load_price_series, load_treasury_rates, write_esg_table,
    write_price_series, write_rate_series, Columns, FiscalEsgTable, PriceSeries, RateSeries,
};
use bbsm_core::pricer::{price_surface, Payoff, PricingConfig};

fn write_csv(path: &Path, f: impl FnOnce(File) -> std::io::Result<()>) {
    f(File::create(path).unwrap()).unwrap();
}

#[test]
fn synthetic_files_to_surface() {
    let dir = tempfile::tempdir().unwrap();
    let n = 1600;
    let gamma_esg = 1.0;

    let index_gen = MarketIndexParams {
        a: 0.02,
        mu: 0.0003,
        v: 0.5,
        sigma: 0.01,
        p0: 0.52,
        p1: 0.0,
        p2: 0.0,
        a0: 100.0,
    };
    let index = simulate_market_index(&index_gen, n, 1.0, 11).unwrap();
    let cal = index.calendar().clone();

    let stock_esg = FiscalEsgTable::new((2015..=2022).map(|y| (y, 4.0 + 0.2 * (y - 2015) as f64)).collect()).unwrap();
    let comp_esg = [
        FiscalEsgTable::new((2015..=2022).map(|y| (y, 5.0 - 0.1 * (y - 2015) as f64)).collect()).unwrap(),
        FiscalEsgTable::new((2015..=2022).map(|y| (y, 3.5)).collect()).unwrap(),
    ];
    let smoother = SmootherConfig::default();

    // Generate the ESG-adjusted stock, then back out the financial price that
    // the pipeline must reconstruct.
    let truth = RiskyParams::new(0.04, 1.5e-4, 0.35, 7e-3, 0.15);
    let gen_path = build_csy_path(&index, &FilterKind::default(), 1.0).unwrap();
    let adjusted = simulate_stock(&truth, 24.0, &gen_path, 0.0, 0);
    let rel_of = |cal| {
        let stock = interpolate_esg_daily(&stock_esg, cal, &smoother).unwrap().series;
        let comps: Vec<_> = comp_esg
            .iter()
            .zip([0.6, 0.4])
            .map(|(t, w)| (interpolate_esg_daily(t, cal, &smoother).unwrap().series, w))
            .collect();
        relative_esg(&stock, &index_esg(&comps).unwrap()).unwrap()
    };
    let rel = rel_of(&cal);
    let financial = PriceSeries::new(
        cal.clone(),
        adjusted
            .values()
            .iter()
            .zip(&rel.rel)
            .map(|(a, z)| a / (1.0 + gamma_esg * z))
            .collect(),
    )
    .unwrap();
    let rates = RateSeries::new(cal.clone(), (0..=n).map(|k| 1.5 + (k as f64 / 200.0).sin()).collect()).unwrap();

    let p = |name: &str| dir.path().join(name);
    write_csv(&p("index.csv"), |f| write_price_series(f, &index));
    write_csv(&p("stock.csv"), |f| write_price_series(f, &financial));
    write_csv(&p("rates.csv"), |f| write_rate_series(f, &rates));
    write_csv(&p("stock_esg.csv"), |f| write_esg_table(f, &stock_esg));
    for (i, t) in comp_esg.iter().enumerate() {
        write_csv(&p(&format!("comp{i}_esg.csv")), |f| write_esg_table(f, t));
    }

    // reload and run
    let cols = Columns::default();
    let index = load_price_series(p("index.csv"), &cols).unwrap();
    let stock = load_price_series(p("stock.csv"), &cols).unwrap();
    let aligned = align_calendars(&[index, stock]).unwrap();
    assert_eq!(aligned.total_dropped(), 0);
    let [index, stock] = <[PriceSeries; 2]>::try_from(aligned.series).unwrap();
    assert_eq!(load_esg_fiscal_scores(p("stock_esg.csv")).unwrap(), stock_esg);
    let rel = rel_of(stock.calendar());
    let a = esg_adjusted_prices(&stock, &rel, gamma_esg).unwrap();

    let path = build_csy_path(&index, &FilterKind::default(), 1.0).unwrap();
    assert!((path.up_prob - gen_path.up_prob).abs() == 0.0);
    let changes = price_changes(&a).unwrap();
    let fit = fit_risky_params(&changes, &a.values()[..n], &path, 1.0, &FitOptions::default()).unwrap();
    let got = [
        fit.params.a,
        fit.params.mu,
        fit.params.v,
        fit.params.sigma,
        fit.params.gamma,
    ];
    let want = [truth.a, truth.mu, truth.v, truth.sigma, truth.gamma];
    for (g, w) in got.iter().zip(want) {
        assert!(((g - w) / w).abs() < 1e-6, "{g} vs {w}");
    }

    let rates = load_treasury_rates(p("rates.csv"), true).unwrap();
    let beta = build_beta_series(&rates, 1.0, 1.0).unwrap();
    let riskless = fit_riskless_params(&beta, 1.0, 1.0).unwrap();
    assert!(riskless.adj_r2.unwrap() > 0.0);

    let a0 = *a.values().last().unwrap();
    let cfg = PricingConfig::new(1.0, path.up_prob, path.x_final(), path.filter, a0, &riskless, 26).with_split_depth(2);
    let strikes: Vec<f64> = (0..5).map(|i| a0 * (0.9 + 0.05 * i as f64)).collect();
    let surface = price_surface(
        &strikes,
        &[2, 7, 11],
        &Payoff::Call,
        gamma_esg,
        &fit.params,
        &riskless,
        &cfg,
    )
    .unwrap();
    assert_eq!(surface.rows.len(), 15);
    for t in [2, 7, 11] {
        let prices: Vec<f64> = strikes.iter().map(|k| surface.price(*k, t).unwrap()).collect();
        assert!(prices.windows(2).all(|w| w[0] >= w[1]), "{prices:?}");
        assert!(prices.iter().all(|c| c.is_finite() && *c >= 0.0));
    }
}

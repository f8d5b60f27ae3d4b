//! Subcommand bodies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use bbsm_core::calibrate::{
    build_beta_series, default_bandwidth, fit_riskless_params, fit_risky_params, kde_compare, model_change_series,
    reparameterize, simulate_stock, FitOptions, NormalizedParams, RisklessParams, RiskyFit, RiskyParams,
};
use bbsm_core::csyip::{build_csy_path, price_changes, simulate_market_index, CsyPath, MarketIndexParams};
use bbsm_core::esg::{
    esg_adjusted_prices, index_esg, index_esg_dated, interpolate_esg_daily, load_dated_weights, load_weights_json,
    relative_esg, EsgSeries, RelEsgSeries,
};
use bbsm_core::ingest::{
    common_calendar, load_esg_fiscal_scores, load_manifest, load_price_series, load_treasury_rates, write_esg_table,
    write_price_series, write_rate_series, Columns, Dated, FiscalEsgTable, PriceSeries, RateSeries, TradingCalendar,
};
use bbsm_core::pricer::{price_surface, Payoff, PriceSurface, PricingConfig};
use chrono::Datelike;
use rand::{Rng, SeedableRng};

use crate::artifact::{job_tag, Artifacts};
use crate::config::Resolved;
use crate::error::CliError;

const DEFAULT_MATURITIES: [usize; 6] = [2, 7, 11, 17, 21, 26];

fn required<'a>(v: &'a Option<PathBuf>, flag: &str, command: &str) -> Result<&'a Path, CliError> {
    v.as_deref()
        .ok_or_else(|| CliError::Config(format!("`{command}` needs {flag}")))
}

fn load_prices(cfg: &mut Resolved, path: &Path) -> Result<PriceSeries, CliError> {
    cfg.record_input(path)?;
    Ok(load_price_series(path, &Columns::default())?)
}

struct StockSource {
    ticker: String,
    prices: PathBuf,
    esg: Option<PathBuf>,
}

/// One ticker's aligned inputs.
struct Prepared {
    ticker: String,
    stock: PriceSeries,
    path: CsyPath,
    rel: Option<RelEsgSeries>,
}

/// Market-wide inputs shared by every ticker.
struct Market {
    index: PriceSeries,
    rates: Option<RateSeries>,
    esg: Option<MarketEsg>,
}

enum MarketEsg {
    Table(FiscalEsgTable),
    Weighted {
        components: BTreeMap<String, FiscalEsgTable>,
        weights: Weights,
    },
}

enum Weights {
    Static(BTreeMap<String, f64>),
    Dated(bbsm_core::esg::DatedWeights),
}

fn stock_sources(cfg: &mut Resolved) -> Result<Vec<StockSource>, CliError> {
    if let Some(m) = cfg.manifest.clone() {
        cfg.record_input(&m)?;
        let manifest = load_manifest(&m)?;
        let tickers: Vec<String> = if cfg.ticker.is_empty() {
            manifest.entries.keys().cloned().collect()
        } else {
            cfg.ticker.clone()
        };
        return tickers
            .into_iter()
            .map(|t| {
                let e = manifest
                    .entries
                    .get(&t)
                    .ok_or_else(|| CliError::Config(format!("ticker {t} is not in the manifest")))?;
                Ok(StockSource {
                    ticker: t,
                    prices: e.prices.clone(),
                    esg: Some(e.esg.clone()),
                })
            })
            .collect();
    }
    let prices = required(&cfg.prices, "--prices or --manifest", cfg.command)?.to_owned();
    if cfg.ticker.len() > 1 {
        return Err(CliError::Config("several tickers need --manifest".into()));
    }
    Ok(vec![StockSource {
        ticker: cfg.ticker.first().cloned().unwrap_or_else(|| "STOCK".into()),
        prices,
        esg: cfg.esg.clone(),
    }])
}

fn load_market(cfg: &mut Resolved, needs_esg: bool) -> Result<Market, CliError> {
    let index_path = required(&cfg.index, "--index", cfg.command)?.to_owned();
    let index = load_prices(cfg, &index_path)?;
    let rates = match cfg.rates.clone() {
        Some(p) => {
            cfg.record_input(&p)?;
            Some(load_treasury_rates(&p, cfg.percent)?)
        }
        None => None,
    };
    let esg = if !needs_esg {
        None
    } else if let Some(p) = cfg.market_esg.clone() {
        cfg.record_input(&p)?;
        Some(MarketEsg::Table(load_esg_fiscal_scores(&p)?))
    } else if let (Some(w), Some(m)) = (cfg.weights.clone(), cfg.manifest.clone()) {
        cfg.record_input(&w)?;
        let weights = if w.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Weights::Dated(load_dated_weights(&w)?)
        } else {
            Weights::Static(load_weights_json(&w)?)
        };
        let manifest = load_manifest(&m)?;
        let mut components = BTreeMap::new();
        for (t, e) in &manifest.entries {
            cfg.record_input(&e.esg)?;
            components.insert(t.clone(), load_esg_fiscal_scores(&e.esg)?);
        }
        Some(MarketEsg::Weighted { components, weights })
    } else {
        return Err(CliError::Config(
            "a nonzero ESG affinity needs --market-esg, or --weights with --manifest".into(),
        ));
    };
    Ok(Market { index, rates, esg })
}

fn market_score(esg: &MarketEsg, cal: &TradingCalendar, cfg: &Resolved) -> Result<EsgSeries, CliError> {
    match esg {
        MarketEsg::Table(t) => Ok(interpolate_esg_daily(t, cal, &cfg.smoother)?.series),
        MarketEsg::Weighted { components, weights } => {
            let daily: BTreeMap<String, EsgSeries> = components
                .iter()
                .map(|(t, table)| Ok((t.clone(), interpolate_esg_daily(table, cal, &cfg.smoother)?.series)))
                .collect::<Result<_, CliError>>()?;
            match weights {
                Weights::Static(w) => {
                    let parts = w
                        .iter()
                        .map(|(t, wt)| {
                            daily
                                .get(t)
                                .map(|s| (s.clone(), *wt))
                                .ok_or_else(|| CliError::Data(format!("no ESG series for weighted ticker {t}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(index_esg(&parts)?)
                }
                Weights::Dated(w) => Ok(index_esg_dated(&daily, w)?),
            }
        }
    }
}

fn prepare(cfg: &mut Resolved, market: &Market, src: &StockSource, needs_esg: bool) -> Result<Prepared, CliError> {
    let stock = load_prices(cfg, &src.prices)?;
    let mut cals = vec![market.index.calendar(), stock.calendar()];
    if let Some(r) = &market.rates {
        cals.push(r.calendar());
    }
    let cal = common_calendar(&cals)?;
    let dropped = stock.len() - cal.len();
    if dropped > 0 {
        log::warn!("{}: {dropped} stock dates dropped by calendar alignment", src.ticker);
    }
    let index = market.index.restrict(&cal);
    let stock = stock.restrict(&cal);
    let path = build_csy_path(&index, &cfg.filter, cfg.delta)?;
    let rel = if needs_esg {
        let esg_path = src
            .esg
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{}: a nonzero ESG affinity needs --esg", src.ticker)))?;
        cfg.record_input(esg_path)?;
        let table = load_esg_fiscal_scores(esg_path)?;
        let stock_score = interpolate_esg_daily(&table, &cal, &cfg.smoother)?.series;
        let market_esg = market.esg.as_ref().expect("loaded when ESG is needed");
        Some(relative_esg(&stock_score, &market_score(market_esg, &cal, cfg)?)?)
    } else {
        None
    };
    Ok(Prepared {
        ticker: src.ticker.clone(),
        stock,
        path,
        rel,
    })
}

fn riskless(market: &Market, cfg: &Resolved) -> Result<RisklessParams, CliError> {
    match &market.rates {
        Some(r) => {
            let beta = build_beta_series(r, 1.0, cfg.delta)?;
            Ok(fit_riskless_params(&beta, 1.0, cfg.delta)?)
        }
        None => {
            log::warn!("no --rates given; pricing with a flat riskless asset");
            Ok(RisklessParams::new(0.0, 0.0))
        }
    }
}

fn adjusted(p: &Prepared, gamma_esg: f64) -> Result<PriceSeries, CliError> {
    match &p.rel {
        Some(rel) => Ok(esg_adjusted_prices(&p.stock, rel, gamma_esg)?),
        None => Ok(p.stock.clone()),
    }
}

fn fit(p: &Prepared, a: &PriceSeries, cfg: &Resolved) -> Result<RiskyFit, CliError> {
    let changes = price_changes(a)?;
    let lagged = &a.values()[..a.len() - 1];
    Ok(fit_risky_params(
        &changes,
        lagged,
        &p.path,
        cfg.delta,
        &FitOptions::default(),
    )?)
}

struct Setup {
    market: Market,
    prepared: Vec<Prepared>,
    riskless: RisklessParams,
}

fn setup(cfg: &mut Resolved) -> Result<Setup, CliError> {
    let needs_esg = cfg.gamma_esg.iter().any(|g| *g != 0.0);
    let sources = stock_sources(cfg)?;
    let market = load_market(cfg, needs_esg)?;
    let prepared = sources
        .iter()
        .map(|s| prepare(cfg, &market, s, needs_esg))
        .collect::<Result<Vec<_>, _>>()?;
    let riskless = riskless(&market, cfg)?;
    Ok(Setup {
        market,
        prepared,
        riskless,
    })
}

fn jobs(prepared: &[Prepared], cfg: &Resolved) -> Vec<(usize, f64)> {
    (0..prepared.len())
        .flat_map(|i| cfg.gamma_esg.iter().map(move |g| (i, *g)))
        .collect()
}

#[derive(Serialize)]
struct PathSummary {
    steps: usize,
    up_prob: f64,
    xi_up: f64,
    xi_down: f64,
    x_final: f64,
    y_final: f64,
}

fn path_summary(path: &CsyPath) -> PathSummary {
    let sv = path.sign_values();
    PathSummary {
        steps: path.steps(),
        up_prob: path.up_prob,
        xi_up: sv.up,
        xi_down: sv.down,
        x_final: path.x_final(),
        y_final: *path.y.last().expect("path has a start value"),
    }
}

pub fn csyip(mut cfg: Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let index_path = required(&cfg.index, "--index", "csyip")?.to_owned();
    let index = load_prices(&mut cfg, &index_path)?;
    let path = build_csy_path(&index, &cfg.filter, cfg.delta)?;
    let art = Artifacts::new(out, &cfg)?;
    Ok(vec![
        art.write_csv("csyip", None, |w| path.write_csv(w))?,
        art.write_json("csyip", None, &path_summary(&path))?,
    ])
}

#[derive(Serialize)]
struct FitRecord {
    ticker: String,
    gamma_esg: f64,
    a0: f64,
    fit: RiskyFit,
    normalized: Option<NormalizedParams>,
}

fn fit_job(p: &Prepared, gamma_esg: f64, cfg: &Resolved) -> Result<(FitRecord, PriceSeries), CliError> {
    let a = adjusted(p, gamma_esg)?;
    let fit = fit(p, &a, cfg)?;
    let a0 = a.values()[0];
    // prices may be nonpositive; scale-free coefficients only exist for A0 > 0
    let normalized = if a0 > 0.0 {
        Some(reparameterize(&fit.params, a0)?)
    } else {
        log::warn!(
            "{} at gamma_esg {gamma_esg}: A0 = {a0} is not positive; normalized coefficients omitted",
            p.ticker
        );
        None
    };
    Ok((
        FitRecord {
            ticker: p.ticker.clone(),
            gamma_esg,
            a0,
            fit,
            normalized,
        },
        a,
    ))
}

#[derive(Serialize)]
struct CalibrationReport {
    index: PathSummary,
    riskless: Option<RisklessParams>,
    fits: Vec<FitRecord>,
}

pub fn calibrate(mut cfg: Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let s = setup(&mut cfg)?;
    let fits = jobs(&s.prepared, &cfg)
        .par_iter()
        .map(|(i, g)| fit_job(&s.prepared[*i], *g, &cfg).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    let report = CalibrationReport {
        index: path_summary(&s.prepared[0].path),
        riskless: s.market.rates.as_ref().map(|_| s.riskless),
        fits,
    };
    let art = Artifacts::new(out, &cfg)?;
    Ok(vec![art.write_json("calibrate", None, &report)?])
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct PriceRecord {
    ticker: String,
    gamma_esg: f64,
    a0: f64,
    x_init: f64,
    params: RiskyParams,
    surface: String,
    #[serde(skip)]
    path: PathBuf,
}

#[derive(Serialize)]
struct PriceReport {
    riskless: RisklessParams,
    jobs: Vec<PriceRecord>,
}

pub fn price(mut cfg: Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if cfg.strikes.is_empty() {
        return Err(CliError::Config("`price` needs --strikes".into()));
    }
    if cfg.maturities.is_empty() {
        cfg.maturities = DEFAULT_MATURITIES
            .iter()
            .copied()
            .filter(|t| *t <= cfg.max_maturity)
            .collect();
    }
    let s = setup(&mut cfg)?;
    let art = Artifacts::new(out, &cfg)?;
    let records = jobs(&s.prepared, &cfg)
        .par_iter()
        .map(|(i, g)| {
            let p = &s.prepared[*i];
            let (rec, a) = fit_job(p, *g, &cfg)?;
            let a0 = *a.values().last().expect("non-empty series");
            if a0 == 0.0 {
                return Err(CliError::Data(format!(
                    "{} at gamma_esg {g}: price is zero on the pricing date, so the numeraire beta0 = A0 is zero",
                    p.ticker
                )));
            }
            let x_init = cfg.x_init.unwrap_or_else(|| p.path.x_final());
            let pc = PricingConfig::new(
                cfg.delta,
                p.path.up_prob,
                x_init,
                p.path.filter,
                a0,
                &s.riskless,
                cfg.max_maturity,
            )
            .with_split_depth(cfg.split_depth);
            let mut surface: PriceSurface = price_surface(
                &cfg.strikes,
                &cfg.maturities,
                &Payoff::Call,
                *g,
                &rec.fit.params,
                &s.riskless,
                &pc,
            )?;
            surface.ticker = Some(p.ticker.clone());
            let file = art.write_csv("price", Some(&job_tag(&p.ticker, *g)), |w| surface.write_csv(w))?;
            Ok(PriceRecord {
                ticker: p.ticker.clone(),
                gamma_esg: *g,
                a0,
                x_init,
                params: rec.fit.params,
                surface: file_name(&file),
                path: file,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut files: Vec<PathBuf> = records.iter().map(|r| r.path.clone()).collect();
    files.push(art.write_json(
        "price",
        None,
        &PriceReport {
            riskless: s.riskless,
            jobs: records,
        },
    )?);
    Ok(files)
}

#[derive(Serialize)]
struct DensityRecord {
    ticker: String,
    gamma_esg: f64,
    bandwidth: f64,
    adj_r2: Option<f64>,
    densities: String,
    #[serde(skip)]
    path: PathBuf,
}

pub fn diagnose(mut cfg: Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let s = setup(&mut cfg)?;
    let art = Artifacts::new(out, &cfg)?;
    let mut files = vec![art.write_csv("path", None, |w| s.prepared[0].path.write_csv(w))?];
    let records = jobs(&s.prepared, &cfg)
        .par_iter()
        .map(|(i, g)| {
            let p = &s.prepared[*i];
            let (rec, a) = fit_job(p, *g, &cfg)?;
            let empirical = price_changes(&a)?;
            let model = model_change_series(&rec.fit.params, &a.values()[..a.len() - 1], &p.path)?;
            let bw = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(&empirical.change));
            let pair = kde_compare(&empirical.change, &model.change, bw)?;
            let file = art.write_csv("density", Some(&job_tag(&p.ticker, *g)), |w| pair.write_csv(w))?;
            Ok(DensityRecord {
                ticker: p.ticker.clone(),
                gamma_esg: *g,
                bandwidth: bw,
                adj_r2: rec.fit.params.adj_r2,
                densities: file_name(&file),
                path: file,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    files.extend(records.iter().map(|r| r.path.clone()));
    files.push(art.write_json("diagnose", None, &records)?);
    Ok(files)
}

/// Generator behind `simulate`; calibrating its output at zero ESG affinity
/// recovers `stock`.
#[derive(Debug, Clone, Serialize)]
pub struct Generator {
    pub index: MarketIndexParams,
    pub stock: RiskyParams,
    pub stock_a0: f64,
    pub noise: f64,
}

pub fn default_generator(noise: f64) -> Generator {
    Generator {
        index: MarketIndexParams {
            a: 0.02,
            mu: 3e-4,
            v: 0.5,
            sigma: 0.01,
            p0: 0.524,
            p1: 0.0,
            p2: 0.0,
            a0: 100.0,
        },
        stock: RiskyParams::new(0.05, 2e-4, 0.4, 8e-3, 0.17),
        stock_a0: 24.0,
        noise,
    }
}

fn esg_table(rng: &mut rand_chacha::ChaCha8Rng, cal: &TradingCalendar, level: f64) -> FiscalEsgTable {
    let first = cal.first().expect("non-empty").year() - 1;
    let last = cal.last().expect("non-empty").year();
    let mut score = level;
    let entries = (first..=last)
        .map(|y| {
            score = (score + rng.random_range(-0.4..0.6)).clamp(0.5, 9.5);
            (y, (score * 100.0).round() / 100.0)
        })
        .collect();
    FiscalEsgTable::new(entries).expect("distinct years")
}

pub fn simulate(cfg: Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if cfg.steps < 60 {
        return Err(CliError::Config(format!(
            "--steps must be at least 60, got {}",
            cfg.steps
        )));
    }
    let gen = default_generator(cfg.noise);
    let index = simulate_market_index(&gen.index, cfg.steps, cfg.delta, cfg.seed)?;
    let path = build_csy_path(&index, &cfg.filter, cfg.delta)?;
    let stock = simulate_stock(&gen.stock, gen.stock_a0, &path, gen.noise, cfg.seed.wrapping_add(1));
    let cal = index.calendar().clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut y = 1.8;
    let yields = (0..cal.len())
        .map(|_| {
            y = (y + rng.random_range(-0.02..0.02f64)).max(0.05);
            (y * 1e4).round() / 1e4
        })
        .collect();
    let rates = RateSeries::new(cal.clone(), yields).map_err(CliError::from)?;
    let stock_esg = esg_table(&mut rng, &cal, 4.0);
    let market_esg = esg_table(&mut rng, &cal, 5.0);

    let art = Artifacts::new(out, &cfg)?;
    let mut files = vec![
        art.write_csv("index", None, |w| write_price_series(w, &index))?,
        art.write_csv("stock", None, |w| write_price_series(w, &stock))?,
        art.write_csv("rates", None, |w| write_rate_series(w, &rates))?,
        art.write_csv("stock_esg", None, |w| write_esg_table(w, &stock_esg))?,
        art.write_csv("market_esg", None, |w| write_esg_table(w, &market_esg))?,
    ];
    files.push(art.write_json("simulate", None, &gen)?);
    Ok(files)
}

//! Daily ESG series, index aggregation and ESG-adjusted valuation.
//!
//! Fiscal-year scores are pinned to the last trading day of each fiscal year,
//! linearly interpolated between those anchors, then passed through a
//! truncated Gaussian moving average. The relative rating
//! `(Z_stock - Z_market) / Z_market` tilts the quoted price by
//! `A = S (1 + gamma_esg * rel)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FiscalEsgTable, PriceSeries, TradingCalendar};

#[derive(Debug, Error)]
pub enum EsgError {
    #[error("ESG table has no entries")]
    EmptyTable,
    #[error("calendar is empty")]
    EmptyCalendar,
    #[error("series are not on the same calendar")]
    CalendarMismatch,
    #[error("all component weights are zero")]
    AllZeroWeights,
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("no components supplied")]
    NoComponents,
    #[error("market ESG score is zero on {0}")]
    DivisionByZero(NaiveDate),
    #[error("invalid smoother configuration: {0}")]
    InvalidSmoother(String),
    #[error("no ESG series for weighted ticker {0}")]
    MissingComponent(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, EsgError>;

/// Daily ESG score on the 0-10 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsgSeries {
    pub calendar: TradingCalendar,
    pub score: Vec<f64>,
}

/// Daily relative ESG rating (dimensionless).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelEsgSeries {
    pub calendar: TradingCalendar,
    pub rel: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub window_days: usize,
    pub gaussian_sigma_days: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            window_days: 126,
            gaussian_sigma_days: 31.5,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days < 1 {
            return Err(EsgError::InvalidSmoother("window_days must be >= 1".into()));
        }
        if !(self.gaussian_sigma_days > 0.0) || !self.gaussian_sigma_days.is_finite() {
            return Err(EsgError::InvalidSmoother("gaussian_sigma_days must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        let half = (self.window_days / 2) as i64;
        let s2 = 2.0 * self.gaussian_sigma_days * self.gaussian_sigma_days;
        (-half..=half).map(|j| (-((j * j) as f64) / s2).exp()).collect()
    }
}

/// Result of [`interpolate_esg_daily`].
#[derive(Debug, Clone, PartialEq)]
pub struct EsgInterpolation {
    pub series: EsgSeries,
    /// Calendar dates preceding the first fiscal-year anchor; they take the
    /// first score.
    pub dates_before_first_fy: usize,
}

fn fiscal_year_end(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, 12, 31).expect("valid fiscal year")
}

/// Piecewise-linear interpolation of fiscal-year scores at the calendar dates.
///
/// Each score is anchored to the last trading day on or before 31 December of
/// its fiscal year (or the year-end itself when the calendar starts later).
/// Dates after the last anchor carry the last score forward.
pub fn interpolate_fiscal_scores(table: &FiscalEsgTable, calendar: &TradingCalendar) -> Result<(Vec<f64>, usize)> {
    if table.is_empty() {
        return Err(EsgError::EmptyTable);
    }
    if calendar.is_empty() {
        return Err(EsgError::EmptyCalendar);
    }
    let mut anchors: Vec<(NaiveDate, f64)> = Vec::with_capacity(table.len());
    for &(year, score) in table.entries() {
        let end = fiscal_year_end(year);
        let date = calendar.last_on_or_before(end).map_or(end, |i| calendar.dates()[i]);
        match anchors.last_mut() {
            // two fiscal years collapsing onto one trading day: later one wins
            Some(last) if last.0 == date => last.1 = score,
            _ => anchors.push((date, score)),
        }
    }

    let mut before = 0;
    let mut seg = 0;
    let values = calendar
        .dates()
        .iter()
        .map(|&d| {
            if d < anchors[0].0 {
                before += 1;
                return anchors[0].1;
            }
            while seg + 1 < anchors.len() && anchors[seg + 1].0 <= d {
                seg += 1;
            }
            if seg + 1 == anchors.len() {
                return anchors[seg].1;
            }
            let (d0, s0) = anchors[seg];
            let (d1, s1) = anchors[seg + 1];
            let w = (d - d0).num_days() as f64 / (d1 - d0).num_days() as f64;
            s0 + w * (s1 - s0)
        })
        .collect();
    Ok((values, before))
}

/// Truncated Gaussian moving average over trading-day offsets
/// `-window/2..=window/2`, renormalized where the window runs off either end.
pub fn gaussian_smooth(values: &[f64], cfg: &SmootherConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let w = cfg.weights();
    let half = (w.len() / 2) as isize;
    let n = values.len() as isize;
    Ok((0..n)
        .map(|i| {
            let lo = (i - half).max(0);
            let hi = (i + half).min(n - 1);
            let (mut num, mut den) = (0.0, 0.0);
            for j in lo..=hi {
                let wt = w[(j - i + half) as usize];
                num += wt * values[j as usize];
                den += wt;
            }
            num / den
        })
        .collect())
}

/// Fiscal-year scores to a smoothed daily series.
pub fn interpolate_esg_daily(
    table: &FiscalEsgTable,
    calendar: &TradingCalendar,
    cfg: &SmootherConfig,
) -> Result<EsgInterpolation> {
    let (raw, before) = interpolate_fiscal_scores(table, calendar)?;
    if before > 0 {
        log::warn!("{before} calendar dates precede the first fiscal-year anchor; using the first score");
    }
    let score = gaussian_smooth(&raw, cfg)?;
    Ok(EsgInterpolation {
        series: EsgSeries {
            calendar: calendar.clone(),
            score,
        },
        dates_before_first_fy: before,
    })
}

fn normalized(weights: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let w: Vec<f64> = weights.collect();
    if let Some(&bad) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(EsgError::InvalidWeight(bad));
    }
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Err(EsgError::AllZeroWeights);
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Weighted index ESG with a fixed weight snapshot. Weights are normalized to
/// sum to one.
pub fn index_esg(components: &[(EsgSeries, f64)]) -> Result<EsgSeries> {
    let (first, _) = components.first().ok_or(EsgError::NoComponents)?;
    if components.iter().any(|(s, _)| s.calendar != first.calendar) {
        return Err(EsgError::CalendarMismatch);
    }
    let w = normalized(components.iter().map(|c| c.1))?;
    let mut score = vec![0.0; first.score.len()];
    for ((series, _), wi) in components.iter().zip(&w) {
        for (acc, s) in score.iter_mut().zip(&series.score) {
            *acc += wi * s;
        }
    }
    Ok(EsgSeries {
        calendar: first.calendar.clone(),
        score,
    })
}

/// Ticker -> weight snapshots keyed by effective date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatedWeights {
    snapshots: BTreeMap<NaiveDate, BTreeMap<String, f64>>,
}

impl DatedWeights {
    pub fn insert(&mut self, effective: NaiveDate, ticker: impl Into<String>, weight: f64) {
        self.snapshots
            .entry(effective)
            .or_default()
            .insert(ticker.into(), weight);
    }

    /// The snapshot in force on `date`: the latest one effective on or before
    /// it, or the earliest snapshot for dates before all of them.
    pub fn at(&self, date: NaiveDate) -> Option<&BTreeMap<String, f64>> {
        self.snapshots
            .range(..=date)
            .next_back()
            .or_else(|| self.snapshots.iter().next())
            .map(|(_, w)| w)
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Index ESG with weights that change over time.
pub fn index_esg_dated(components: &BTreeMap<String, EsgSeries>, weights: &DatedWeights) -> Result<EsgSeries> {
    let first = components.values().next().ok_or(EsgError::NoComponents)?;
    if components.values().any(|s| s.calendar != first.calendar) {
        return Err(EsgError::CalendarMismatch);
    }
    let mut score = Vec::with_capacity(first.calendar.len());
    for (i, d) in first.calendar.dates().iter().enumerate() {
        let snap = weights.at(*d).ok_or(EsgError::AllZeroWeights)?;
        let w = normalized(snap.values().copied())?;
        let mut acc = 0.0;
        for ((ticker, _), wi) in snap.iter().zip(w) {
            let s = components
                .get(ticker)
                .ok_or_else(|| EsgError::MissingComponent(ticker.clone()))?;
            acc += wi * s.score[i];
        }
        score.push(acc);
    }
    Ok(EsgSeries {
        calendar: first.calendar.clone(),
        score,
    })
}

/// `(Z_stock - Z_market) / Z_market` date-wise.
pub fn relative_esg(stock: &EsgSeries, market: &EsgSeries) -> Result<RelEsgSeries> {
    if stock.calendar != market.calendar {
        return Err(EsgError::CalendarMismatch);
    }
    let rel = stock
        .score
        .iter()
        .zip(&market.score)
        .zip(market.calendar.dates())
        .map(|((x, m), d)| {
            if *m == 0.0 {
                Err(EsgError::DivisionByZero(*d))
            } else {
                Ok((x - m) / m)
            }
        })
        .collect::<Result<_>>()?;
    Ok(RelEsgSeries {
        calendar: stock.calendar.clone(),
        rel,
    })
}

/// `A_t = S_t (1 + gamma_esg * rel_t)`. Negative results are allowed.
pub fn esg_adjusted_prices(financial: &PriceSeries, rel: &RelEsgSeries, gamma_esg: f64) -> Result<PriceSeries> {
    if *financial.calendar() != rel.calendar {
        return Err(EsgError::CalendarMismatch);
    }
    let values = financial
        .values()
        .iter()
        .zip(&rel.rel)
        .map(|(s, z)| s * (1.0 + gamma_esg * z))
        .collect();
    Ok(PriceSeries::new(financial.calendar().clone(), values).expect("lengths checked"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EsgError {
    EsgError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

/// Reads a `{ticker: weight}` JSON object.
pub fn load_weights_json(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(f).map_err(|e| io_err(path, e))
}

/// Reads `effective_date,ticker,weight` rows.
pub fn read_dated_weights<R: Read>(reader: R) -> std::result::Result<DatedWeights, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = DatedWeights::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| format!("line {line}: bad {what}");
        let date =
            NaiveDate::parse_from_str(rec.get(0).ok_or_else(|| bad("date"))?, "%Y-%m-%d").map_err(|_| bad("date"))?;
        let ticker = rec.get(1).ok_or_else(|| bad("ticker"))?;
        let weight: f64 = rec
            .get(2)
            .ok_or_else(|| bad("weight"))?
            .parse()
            .map_err(|_| bad("weight"))?;
        out.insert(date, ticker, weight);
    }
    Ok(out)
}

pub fn load_dated_weights(path: impl AsRef<Path>) -> Result<DatedWeights> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_dated_weights(f).map_err(|e| io_err(path, e))
}

pub fn write_esg_series<W: Write>(writer: W, series: &EsgSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "score"])?;
    for (d, s) in series.calendar.dates().iter().zip(&series.score) {
        w.write_record([d.to_string(), s.to_string()])?;
    }
    w.flush()
}

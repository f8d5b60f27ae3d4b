//! Price grids over strike and maturity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{price_many, OptionContract, Payoff, PricingConfig, Result};
use crate::calibrate::{RisklessParams, RiskyParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub strike: f64,
    pub maturity: usize,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSurface {
    pub ticker: Option<String>,
    pub gamma_esg: f64,
    pub rows: Vec<SurfaceRow>,
}

impl PriceSurface {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn price(&self, strike: f64, maturity: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.strike == strike && r.maturity == maturity)
            .map(|r| r.price)
    }

    /// Long-format CSV: `ticker,gamma_esg,K,T,price`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_surfaces_csv(writer, std::slice::from_ref(self))
    }
}

pub fn write_surfaces_csv<W: Write>(writer: W, surfaces: &[PriceSurface]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ticker", "gamma_esg", "K", "T", "price"])?;
    for s in surfaces {
        let ticker = s.ticker.as_deref().unwrap_or("");
        for r in &s.rows {
            w.write_record([
                ticker.to_string(),
                s.gamma_esg.to_string(),
                r.strike.to_string(),
                r.maturity.to_string(),
                r.price.to_string(),
            ])?;
        }
    }
    w.flush()
}

/// Prices `payoff` on every (strike, maturity) pair, one traversal per maturity.
pub fn price_surface(
    strikes: &[f64],
    maturities: &[usize],
    payoff: &Payoff,
    gamma_esg: f64,
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> Result<PriceSurface> {
    let mut rows = Vec::with_capacity(strikes.len() * maturities.len());
    if !strikes.is_empty() {
        for &t in maturities {
            let options: Vec<OptionContract> = strikes
                .iter()
                .map(|&k| OptionContract {
                    payoff: payoff.clone(),
                    strike: k,
                    maturity: t,
                    gamma_esg,
                })
                .collect();
            let priced = price_many(&options, params, riskless, cfg)?;
            rows.extend(strikes.iter().zip(priced).map(|(&strike, res)| SurfaceRow {
                strike,
                maturity: t,
                price: res.price,
            }));
        }
    }
    Ok(PriceSurface {
        ticker: None,
        gamma_esg,
        rows,
    })
}

/// Strike at which the call price at `maturity` equals `price`, by linear
/// interpolation between neighbouring grid strikes.
pub fn strike_for_price(surface: &PriceSurface, maturity: usize, price: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = surface
        .rows
        .iter()
        .filter(|r| r.maturity == maturity)
        .map(|r| (r.strike, r.price))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((k0, c0), (k1, c1)) = (w[0], w[1]);
        let (lo, hi) = if c0 <= c1 { (c0, c1) } else { (c1, c0) };
        if price < lo || price > hi {
            return None;
        }
        if c1 == c0 {
            return Some(k0);
        }
        Some(k0 + (price - c0) / (c1 - c0) * (k1 - k0))
    })
}

/// Strikes reaching one price level under three ESG affinities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrikeShift {
    pub strike_negative: f64,
    pub strike_neutral: f64,
    pub strike_positive: f64,
}

impl StrikeShift {
    /// `|K(-1) - K(0)|`
    pub fn shift_negative(&self) -> f64 {
        (self.strike_negative - self.strike_neutral).abs()
    }

    /// `|K(1) - K(0)|`
    pub fn shift_positive(&self) -> f64 {
        (self.strike_positive - self.strike_neutral).abs()
    }
}

/// Inverse-interpolated strikes for price `price` at `maturity` on surfaces
/// valued at affinities -1, 0 and 1. Reports only; asserts nothing.
pub fn strike_shift_diagnostic(
    negative: &PriceSurface,
    neutral: &PriceSurface,
    positive: &PriceSurface,
    maturity: usize,
    price: f64,
) -> Option<StrikeShift> {
    Some(StrikeShift {
        strike_negative: strike_for_price(negative, maturity, price)?,
        strike_neutral: strike_for_price(neutral, maturity, price)?,
        strike_positive: strike_for_price(positive, maturity, price)?,
    })
}

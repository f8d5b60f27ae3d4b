//! Invariance-principle processes built from a market index.
//!
//! From the index's daily changes we form standardized changes `Z`, the
//! mean-zero/variance-one two-point signs `xi`, the scaled partial sums `X`
//! (a discrete Brownian path) and the filtered sums `Y = sum sqrt(Δ) xi h(X_prev)`
//! (a discrete `∫ h(B) dB`). The same module simulates the binary index
//! dynamics whose up/down moves drive those signs.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{PriceSeries, TradingCalendar};

#[derive(Debug, Error, PartialEq)]
pub enum CsyError {
    #[error("series needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("changes have zero sample variance")]
    ZeroVariance,
    #[error("every standardized change has the same sign; up-probability is {0}")]
    DegenerateProbability(f64),
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("volatility psi = {psi} < 0 at step {step}")]
    NegativeVolatility { step: usize, psi: f64 },
    #[error("time step must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}

pub type Result<T> = std::result::Result<T, CsyError>;

/// One-step changes of a dated series, carried on the calendar minus its first date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSeries {
    pub calendar: TradingCalendar,
    pub change: Vec<f64>,
}

impl ChangeSeries {
    pub fn from_values(change: Vec<f64>) -> Self {
        let calendar = PriceSeries::from_values(vec![0.0; change.len() + 1]).calendar().tail();
        Self { calendar, change }
    }

    pub fn len(&self) -> usize {
        self.change.len()
    }

    pub fn is_empty(&self) -> bool {
        self.change.is_empty()
    }
}

/// A path filter `h`.
pub trait Filter {
    fn eval(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Filter for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Built-in path filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// `sign(x) |x/d|^(3/5)`: odd, continuous, unbounded but sub-linear.
    Power { d: f64 },
    /// `exp(-x²/(2 s²)) / (sqrt(2π) s)`: passes only `|x|` within a few `s` of zero.
    Gaussian { sigma_h: f64 },
}

impl Default for FilterKind {
    fn default() -> Self {
        FilterKind::Power { d: 10.0 }
    }
}

impl FilterKind {
    pub const POWER_EXPONENT: f64 = 0.6;

    pub fn validate(&self) -> Result<()> {
        let (name, s) = match *self {
            FilterKind::Power { d } => ("d", d),
            FilterKind::Gaussian { sigma_h } => ("sigma_h", sigma_h),
        };
        if s > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(CsyError::InvalidFilter(format!("{name} = {s} must be positive")))
        }
    }
}

impl Filter for FilterKind {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        h_eval(x, self)
    }
}

/// Evaluates the filter at `x`.
#[inline]
pub fn h_eval(x: f64, filter: &FilterKind) -> f64 {
    match *filter {
        FilterKind::Power { d } => {
            let u = x / d;
            if u == 0.0 {
                0.0
            } else {
                u.signum() * u.abs().powf(FilterKind::POWER_EXPONENT)
            }
        }
        FilterKind::Gaussian { sigma_h } => {
            let u = x / sigma_h;
            (-0.5 * u * u).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma_h)
        }
    }
}

/// The two values taken by a sign: `xi_u = sqrt((1-p)/p)` and the magnitude
/// of the down value `xi_d = sqrt(p/(1-p))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignValues {
    pub up: f64,
    pub down: f64,
}

impl SignValues {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CsyError::ProbabilityOutOfRange(p));
        }
        Ok(Self {
            up: ((1.0 - p) / p).sqrt(),
            down: (p / (1.0 - p)).sqrt(),
        })
    }
}

/// Jointly indexed invariance-principle processes.
///
/// `z`, `xi` have one entry per change (step `k = 1..=n` stored at `k-1`);
/// `x`, `h_of_x`, `y` have `n + 1` entries with `x[0] = y[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyPath {
    pub calendar: TradingCalendar,
    pub z: Vec<f64>,
    pub up_prob: f64,
    pub xi: Vec<f64>,
    pub x: Vec<f64>,
    pub h_of_x: Vec<f64>,
    pub y: Vec<f64>,
    pub delta: f64,
    pub filter: FilterKind,
}

impl CsyPath {
    pub fn steps(&self) -> usize {
        self.xi.len()
    }

    /// Final value of the cumulative path.
    pub fn x_final(&self) -> f64 {
        *self.x.last().expect("x has at least one entry")
    }

    pub fn sign_values(&self) -> SignValues {
        SignValues::new(self.up_prob).expect("validated at construction")
    }

    /// Writes `k,date,up_prob,z,xi,x,h_of_x,y`; the `k = 0` row leaves `z`, `xi` blank.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "date", "up_prob", "z", "xi", "x", "h_of_x", "y"])?;
        let dates = self.calendar.dates();
        for k in 0..self.x.len() {
            let (z, xi) = if k == 0 {
                (String::new(), String::new())
            } else {
                (self.z[k - 1].to_string(), self.xi[k - 1].to_string())
            };
            w.write_record([
                k.to_string(),
                dates.get(k).map(|d| d.to_string()).unwrap_or_default(),
                self.up_prob.to_string(),
                z,
                xi,
                self.x[k].to_string(),
                self.h_of_x[k].to_string(),
                self.y[k].to_string(),
            ])?;
        }
        w.flush()
    }
}

/// `change[k] = value[k+1] - value[k]`.
pub fn price_changes(series: &PriceSeries) -> Result<ChangeSeries> {
    if series.len() < 2 {
        return Err(CsyError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    Ok(ChangeSeries {
        calendar: series.calendar().tail(),
        change: series.values().windows(2).map(|w| w[1] - w[0]).collect(),
    })
}

/// Sample mean and unbiased (n-1) standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn standardize_with(changes: &[f64], stats_from: &[f64]) -> Result<Vec<f64>> {
    if stats_from.len() < 2 {
        return Err(CsyError::TooShort {
            needed: 2,
            got: stats_from.len(),
        });
    }
    let (mean, std) = mean_std(stats_from);
    if !(std > 0.0) {
        return Err(CsyError::ZeroVariance);
    }
    Ok(changes.iter().map(|c| (c - mean) / std).collect())
}

/// Centers and scales by the whole window's sample mean and sample standard deviation.
pub fn standardize(changes: &ChangeSeries) -> Result<Vec<f64>> {
    standardize_with(&changes.change, &changes.change)
}

/// Fraction of standardized changes that are `>= 0`.
pub fn estimate_up_probability(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(CsyError::TooShort { needed: 1, got: 0 });
    }
    let ups = z.iter().filter(|v| **v >= 0.0).count();
    let p = ups as f64 / z.len() as f64;
    if ups == 0 || ups == z.len() {
        return Err(CsyError::DegenerateProbability(p));
    }
    Ok(p)
}

/// Maps `Z >= 0` to `xi_u` and `Z < 0` to `-xi_d`.
pub fn bernoulli_signs(z: &[f64], p: f64) -> Result<Vec<f64>> {
    let sv = SignValues::new(p)?;
    Ok(z.iter().map(|v| if *v >= 0.0 { sv.up } else { -sv.down }).collect())
}

/// `x[0] = 0`, `x[k] = x[k-1] + sqrt(Δ) xi[k-1]`.
pub fn cumulative_path(xi: &[f64], delta: f64) -> Vec<f64> {
    let sd = delta.sqrt();
    let mut x = Vec::with_capacity(xi.len() + 1);
    let mut acc = 0.0;
    x.push(acc);
    for s in xi {
        acc += sd * s;
        x.push(acc);
    }
    x
}

/// `y[0] = 0`, `y[k] = y[k-1] + sqrt(Δ) xi[k-1] h(x[k-1])`.
pub fn integral_path(xi: &[f64], x: &[f64], h: &impl Filter, delta: f64) -> Result<Vec<f64>> {
    if x.len() != xi.len() + 1 {
        return Err(CsyError::LengthMismatch(format!(
            "x has {} entries, expected {}",
            x.len(),
            xi.len() + 1
        )));
    }
    let sd = delta.sqrt();
    let mut y = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    y.push(acc);
    for (s, xp) in xi.iter().zip(x) {
        acc += sd * s * h.eval(*xp);
        y.push(acc);
    }
    Ok(y)
}

/// Full path from an index series, with statistics and `p` estimated on every change.
pub fn build_csy_path(index: &PriceSeries, filter: &FilterKind, delta: f64) -> Result<CsyPath> {
    build_csy_path_estimated_on(index, filter, delta, 0..index.len().saturating_sub(1))
}

/// As [`build_csy_path`], but mean, standard deviation and the up-probability
/// are estimated only on the changes in `estimation` (indices into the change
/// series) and then applied to every change.
pub fn build_csy_path_estimated_on(
    index: &PriceSeries,
    filter: &FilterKind,
    delta: f64,
    estimation: Range<usize>,
) -> Result<CsyPath> {
    if index.len() < 3 {
        return Err(CsyError::TooShort {
            needed: 3,
            got: index.len(),
        });
    }
    if !(delta > 0.0) {
        return Err(CsyError::InvalidDelta(delta));
    }
    filter.validate()?;
    let changes = price_changes(index)?;
    if estimation.end > changes.len() || estimation.start >= estimation.end {
        return Err(CsyError::LengthMismatch(format!(
            "estimation window {estimation:?} outside 0..{}",
            changes.len()
        )));
    }
    let z = standardize_with(&changes.change, &changes.change[estimation.clone()])?;
    let up_prob = estimate_up_probability(&z[estimation])?;
    let xi = bernoulli_signs(&z, up_prob)?;
    let x = cumulative_path(&xi, delta);
    let h_of_x: Vec<f64> = x.iter().map(|v| h_eval(*v, filter)).collect();
    let y = integral_path(&xi, &x, filter, delta)?;
    Ok(CsyPath {
        calendar: index.calendar().clone(),
        z,
        up_prob,
        xi,
        x,
        h_of_x,
        y,
        delta,
        filter: *filter,
    })
}

/// Constant BBSM coefficients of the market index and its up-probability expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketIndexParams {
    pub a: f64,
    pub mu: f64,
    pub v: f64,
    pub sigma: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub a0: f64,
}

impl MarketIndexParams {
    /// `p0 + p1 sqrt(Δ) + p2 Δ`.
    pub fn up_probability(&self, delta: f64) -> f64 {
        self.p0 + self.p1 * delta.sqrt() + self.p2 * delta
    }

    pub fn drift(&self, level: f64) -> f64 {
        self.a + self.mu * level
    }

    pub fn volatility(&self, level: f64) -> f64 {
        self.v + self.sigma * level
    }
}

/// Simulates `n` binary steps of the index dynamics. Deterministic in `seed`.
pub fn simulate_market_index(params: &MarketIndexParams, n: usize, delta: f64, seed: u64) -> Result<PriceSeries> {
    if !(delta > 0.0) {
        return Err(CsyError::InvalidDelta(delta));
    }
    let p = params.up_probability(delta);
    let sv = SignValues::new(p)?;
    let sd = delta.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n + 1);
    let mut level = params.a0;
    values.push(level);
    for step in 0..n {
        let psi = params.volatility(level);
        if psi < 0.0 {
            return Err(CsyError::NegativeVolatility { step, psi });
        }
        let phi = params.drift(level);
        let up = rng.random::<f64>() < p;
        let c = if up {
            phi * delta + sv.up * psi * sd
        } else {
            phi * delta - sv.down * psi * sd
        };
        level += c;
        values.push(level);
    }
    Ok(PriceSeries::from_values(values))
}

//! Calibration of the path-dependent BBSM dynamics.
//!
//! The risky asset's one-step change is regressed on
//! `1, A_k, xi_{k+1}, A_k xi_{k+1}, h(X_k) xi_{k+1}` subject to a non-negative
//! conditional volatility `ṽ + σ̃ A_k + γ̃ h(X_k) >= 0` at every observation.
//! The riskless asset is fitted by ordinary least squares on the β0-scaled
//! design, which makes `(ρ, r)` independent of the choice of β0.

pub mod kde;
pub mod lsq;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csyip::{ChangeSeries, CsyPath};
use crate::ingest::{PriceSeries, RateSeries};

pub use kde::{default_bandwidth, gaussian_kde, kde_compare, silverman_bandwidth, trapezoid, DensityPair};
pub use lsq::{LsqError, LsqOptions, LsqSolution};

/// Trading days per year used to turn annualized yields into daily rates.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
/// Allowed violation of the volatility constraint at any observation.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("regressors are collinear (column {0})")]
    RankDeficient(usize),
    #[error("constrained fit reported infeasible: {0}")]
    Infeasible(String),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("A0 must be positive, got {0}")]
    NonpositiveA0(f64),
    #[error("volatility psi must be positive, got {0}")]
    NonpositiveVolatility(f64),
    #[error("bandwidth must be positive, got {0}")]
    NonpositiveBandwidth(f64),
    #[error("adjusted R² undefined for n = {n}, k = {k}")]
    DegenerateDenominator { n: usize, k: usize },
    #[error("beta0 must be nonzero")]
    ZeroBeta0,
    #[error("time step must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl From<LsqError> for CalibrationError {
    fn from(e: LsqError) -> Self {
        match e {
            LsqError::RankDeficient { column } => CalibrationError::RankDeficient(column),
            LsqError::InfeasibleStart { .. } => CalibrationError::Infeasible(e.to_string()),
            other => CalibrationError::Solver(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Per-day BBSM coefficients of the risky asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskyParams {
    pub a: f64,
    pub mu: f64,
    pub v: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Set by a fit.
    pub adj_r2: Option<f64>,
    /// First lagged price of the fitted window.
    pub a0: Option<f64>,
}

impl RiskyParams {
    /// Parameters with no fit metadata, e.g. for simulation or pricing studies.
    pub fn new(a: f64, mu: f64, v: f64, sigma: f64, gamma: f64) -> Self {
        Self {
            a,
            mu,
            v,
            sigma,
            gamma,
            delta: 1.0,
            adj_r2: None,
            a0: None,
        }
    }

    /// `(ã, μ̃, ṽ, σ̃, γ̃) = (aΔ, μΔ, v√Δ, σ√Δ, γ√Δ)`.
    pub fn tilde(&self, delta: f64) -> [f64; 5] {
        let sd = delta.sqrt();
        [
            self.a * delta,
            self.mu * delta,
            self.v * sd,
            self.sigma * sd,
            self.gamma * sd,
        ]
    }

    fn from_tilde(t: &[f64], delta: f64) -> Self {
        let sd = delta.sqrt();
        Self {
            a: t[0] / delta,
            mu: t[1] / delta,
            v: t[2] / sd,
            sigma: t[3] / sd,
            gamma: t[4] / sd,
            delta,
            adj_r2: None,
            a0: None,
        }
    }

    /// Drift `φ = a + μA`.
    #[inline]
    pub fn phi(&self, level: f64) -> f64 {
        self.a + self.mu * level
    }

    /// State volatility `ψ = v + σA`.
    #[inline]
    pub fn psi(&self, level: f64) -> f64 {
        self.v + self.sigma * level
    }

    /// Conditional volatility `η = ψ + γ h(X)`.
    #[inline]
    pub fn eta(&self, level: f64, h: f64) -> f64 {
        self.psi(level) + self.gamma * h
    }
}

/// Standard errors of the per-day coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub a: f64,
    pub mu: f64,
    pub v: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl ParamErrors {
    pub fn as_array(&self) -> [f64; 5] {
        [self.a, self.mu, self.v, self.sigma, self.gamma]
    }
}

/// Fitted parameters together with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskyFit {
    pub params: RiskyParams,
    pub std_errors: ParamErrors,
    pub observations: usize,
    /// Distinct constraint rows after deduplication.
    pub constraints: usize,
    pub active_constraints: usize,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub residual_ss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub min_observations: usize,
    pub solver: LsqOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_observations: 50,
            solver: LsqOptions::default(),
        }
    }
}

/// The regression design for one risky-asset fit.
#[derive(Debug, Clone)]
pub struct RiskyDesign {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Constraint rows `(0, 0, 1, A_k, h_k)`, deduplicated.
    pub constraints: DMatrix<f64>,
}

impl RiskyDesign {
    pub fn new(changes: &[f64], lagged: &[f64], path: &CsyPath) -> Result<Self> {
        let n = changes.len();
        if lagged.len() != n || path.xi.len() != n || path.h_of_x.len() != n + 1 {
            return Err(CalibrationError::LengthMismatch(format!(
                "{n} changes, {} lagged prices, {} signs, {} filter values",
                lagged.len(),
                path.xi.len(),
                path.h_of_x.len()
            )));
        }
        let x = DMatrix::from_fn(n, 5, |i, j| {
            let (a, xi, h) = (lagged[i], path.xi[i], path.h_of_x[i]);
            match j {
                0 => 1.0,
                1 => a,
                2 => xi,
                3 => a * xi,
                _ => h * xi,
            }
        });
        let y = DVector::from_column_slice(changes);

        let key = |v: f64| (v * 1e12).round() as i128;
        let mut seen = BTreeSet::new();
        let mut rows = Vec::new();
        for (&a, &h) in lagged[..n].iter().zip(&path.h_of_x[..n]) {
            if seen.insert((key(a), key(h))) {
                rows.extend_from_slice(&[0.0, 0.0, 1.0, a, h]);
            }
        }
        let constraints = DMatrix::from_row_slice(rows.len() / 5, 5, &rows);
        Ok(Self { x, y, constraints })
    }

    pub fn observations(&self) -> usize {
        self.y.len()
    }

    /// Smallest value of `ṽ + σ̃A + γ̃h` over the constraint rows.
    pub fn min_constraint(&self, tilde: &[f64]) -> f64 {
        let b = DVector::from_column_slice(tilde);
        (&self.constraints * b).min()
    }

    pub fn objective(&self, tilde: &[f64]) -> f64 {
        (&self.y - &self.x * DVector::from_column_slice(tilde)).norm_squared()
    }
}

/// Fits `(a, μ, v, σ, γ)` to the risky asset's changes.
///
/// `changes[k] = A[k+1] - A[k]`, `lagged[k] = A[k]`, and the path supplies
/// `xi[k]` (the sign of step `k+1`) and `h_of_x[k]`.
pub fn fit_risky_params(
    changes: &ChangeSeries,
    lagged: &[f64],
    path: &CsyPath,
    delta: f64,
    opts: &FitOptions,
) -> Result<RiskyFit> {
    if !(delta > 0.0) {
        return Err(CalibrationError::InvalidDelta(delta));
    }
    let n = changes.len();
    if n < opts.min_observations.max(6) {
        return Err(CalibrationError::TooFewObservations {
            needed: opts.min_observations.max(6),
            got: n,
        });
    }
    let design = RiskyDesign::new(&changes.change, lagged, path)?;

    let ols = lsq::solve_ols(&design.x, &design.y, &opts.solver)?;
    let sol = if design.min_constraint(ols.coef.as_slice()) >= 0.0 {
        ols
    } else {
        let lower = DVector::zeros(design.constraints.nrows());
        let start = DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        lsq::solve_inequality_lsq(&design.x, &design.y, &design.constraints, &lower, &start, &opts.solver)?
    };
    if design.min_constraint(sol.coef.as_slice()) < -FEASIBILITY_TOL {
        return Err(CalibrationError::Infeasible(format!(
            "volatility constraint violated by {:e}",
            -design.min_constraint(sol.coef.as_slice())
        )));
    }

    let mut params = RiskyParams::from_tilde(sol.coef.as_slice(), delta);
    let dep = design.y.as_slice();
    let r2 = r_squared(sol.residual_ss, dep);
    params.adj_r2 = Some(adjusted_r2(r2, n, 4)?);
    params.a0 = Some(lagged[0]);

    let s2 = sol.residual_ss / (n - 5) as f64;
    let se: Vec<f64> = (0..5).map(|j| (s2 * sol.inverse_gram[(j, j)]).sqrt()).collect();
    let se = RiskyParams::from_tilde(&se, delta);
    Ok(RiskyFit {
        params,
        std_errors: ParamErrors {
            a: se.a,
            mu: se.mu,
            v: se.v,
            sigma: se.sigma,
            gamma: se.gamma,
        },
        observations: n,
        constraints: design.constraints.nrows(),
        active_constraints: sol.active.len(),
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        residual_ss: sol.residual_ss,
    })
}

/// Fitted values `ĉ_{k+1} = ã + μ̃A_k + (ṽ + σ̃A_k + γ̃h(X_k)) xi_{k+1}`.
pub fn model_change_series(params: &RiskyParams, lagged: &[f64], path: &CsyPath) -> Result<ChangeSeries> {
    let n = lagged.len();
    if path.xi.len() != n || path.h_of_x.len() < n {
        return Err(CalibrationError::LengthMismatch(format!(
            "{n} lagged prices vs {} signs",
            path.xi.len()
        )));
    }
    let [at, mt, vt, st, gt] = params.tilde(params.delta);
    let change = (0..n)
        .map(|k| {
            let a = lagged[k];
            at + mt * a + (vt + st * a + gt * path.h_of_x[k]) * path.xi[k]
        })
        .collect();
    Ok(ChangeSeries {
        calendar: path.calendar.tail(),
        change,
    })
}

/// `1 - RSS/TSS` with TSS about the mean of the dependent variable.
pub fn r_squared(residual_ss: f64, dependent: &[f64]) -> f64 {
    let n = dependent.len() as f64;
    let mean = dependent.iter().sum::<f64>() / n;
    let tss: f64 = dependent.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - residual_ss / tss
}

/// `1 - (1 - R²)(n - 1)/(n - k - 1)` for `k` regressors besides the intercept.
pub fn adjusted_r2(r2: f64, n: usize, k: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(CalibrationError::DegenerateDenominator { n, k });
    }
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k - 1) as f64)
}

/// Adjusted R² from residuals and the dependent variable.
pub fn adjusted_r2_from_residuals(residuals: &[f64], dependent: &[f64], k: usize) -> Result<f64> {
    if residuals.len() != dependent.len() {
        return Err(CalibrationError::LengthMismatch(
            "residuals and dependent variable differ in length".into(),
        ));
    }
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    adjusted_r2(r_squared(rss, dependent), dependent.len(), k)
}

/// Per-day coefficients of the riskless asset under the β0-scaled design:
/// `β_{k+1} = β_k + (ρ β0 + r β_k) Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisklessParams {
    pub rho: f64,
    pub r: f64,
    pub beta0: f64,
    pub adj_r2: Option<f64>,
}

impl RisklessParams {
    pub fn new(rho: f64, r: f64) -> Self {
        Self {
            rho,
            r,
            beta0: 1.0,
            adj_r2: None,
        }
    }

    /// `χ = ρ β0 + r β`.
    #[inline]
    pub fn chi(&self, beta0: f64, beta: f64) -> f64 {
        self.rho * beta0 + self.r * beta
    }

    /// Deterministic `β_0..=β_steps` started from `beta0`.
    pub fn beta_path(&self, beta0: f64, steps: usize, delta: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut b = beta0;
        out.push(b);
        for _ in 0..steps {
            b += self.chi(beta0, b) * delta;
            out.push(b);
        }
        out
    }
}

/// Compounds annualized yields (converted to daily by `/252`) from `beta0`:
/// `β_{k+1} = (1 + y_k/252 · Δ) β_k`.
pub fn build_beta_series(rates: &RateSeries, beta0: f64, delta: f64) -> Result<PriceSeries> {
    if beta0 == 0.0 {
        return Err(CalibrationError::ZeroBeta0);
    }
    let mut values = Vec::with_capacity(rates.len());
    let mut b = beta0;
    for (k, y) in rates.annualized_yield().iter().enumerate() {
        values.push(b);
        if k + 1 < rates.len() {
            b *= 1.0 + y / TRADING_DAYS_PER_YEAR * delta;
        }
    }
    Ok(PriceSeries::new(rates.calendar().clone(), values).expect("lengths match"))
}

/// OLS of `(β_{k+1} - β_k)/Δ` on `[β0, β_k]`.
pub fn fit_riskless_params(beta: &PriceSeries, beta0: f64, delta: f64) -> Result<RisklessParams> {
    if beta0 == 0.0 {
        return Err(CalibrationError::ZeroBeta0);
    }
    if !(delta > 0.0) {
        return Err(CalibrationError::InvalidDelta(delta));
    }
    let b = beta.values();
    if b.len() < 3 {
        return Err(CalibrationError::TooFewObservations {
            needed: 3,
            got: b.len(),
        });
    }
    let n = b.len() - 1;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { beta0 } else { b[i] });
    let y = DVector::from_fn(n, |i, _| (b[i + 1] - b[i]) / delta);
    let sol = lsq::solve_ols(&x, &y, &LsqOptions::default())?;
    let r2 = r_squared(sol.residual_ss, y.as_slice());
    Ok(RisklessParams {
        rho: sol.coef[0],
        r: sol.coef[1],
        beta0,
        adj_r2: Some(adjusted_r2(r2, n, 1)?),
    })
}

/// Initial-value-independent parameters: `a/A0, v/A0, γ/A0` alongside `μ, σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub a_over_a0: f64,
    pub mu: f64,
    pub v_over_a0: f64,
    pub sigma: f64,
    pub gamma_over_a0: f64,
}

pub fn reparameterize(params: &RiskyParams, a0: f64) -> Result<NormalizedParams> {
    if !(a0 > 0.0) {
        return Err(CalibrationError::NonpositiveA0(a0));
    }
    Ok(NormalizedParams {
        a_over_a0: params.a / a0,
        mu: params.mu,
        v_over_a0: params.v / a0,
        sigma: params.sigma,
        gamma_over_a0: params.gamma / a0,
    })
}

/// `Θ = (φ - χ)/ψ`. Logs a warning when `Θ <= 0`.
pub fn market_price_of_risk(phi: f64, chi: f64, psi: f64) -> Result<f64> {
    if !(psi > 0.0) {
        return Err(CalibrationError::NonpositiveVolatility(psi));
    }
    let theta = (phi - chi) / psi;
    if theta <= 0.0 {
        log::warn!("market price of risk {theta} is not strictly positive");
    }
    Ok(theta)
}

/// Generates a stock whose changes follow the path-dependent dynamics exactly,
/// driven by `path`'s signs, plus optional centered Gaussian noise.
/// Returns `path.steps() + 1` values on the path's calendar.
pub fn simulate_stock(params: &RiskyParams, a0: f64, path: &CsyPath, noise_std: f64, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let [at, mt, vt, st, gt] = params.tilde(path.delta);
    let mut values = Vec::with_capacity(path.steps() + 1);
    let mut a = a0;
    values.push(a);
    for k in 0..path.steps() {
        let eps = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        a += at + mt * a + (vt + st * a + gt * path.h_of_x[k]) * path.xi[k] + eps;
        values.push(a);
    }
    PriceSeries::new(path.calendar.clone(), values).expect("calendar matches path")
}

//! Calibration and pricing for the path-dependent, ESG-valued
//! Bachelier–Black–Scholes–Merton model.
//!
//! Pipeline: [`ingest`] loads and aligns price, ESG and rate series; [`esg`]
//! builds daily ESG scores and ESG-adjusted prices; [`csyip`] turns a market
//! index into the sign path `ξ`, its cumulative sum `X` and the filtered
//! integral `Y`; [`calibrate`] fits the risky and riskless dynamics; [`pricer`]
//! values European options on the non-recombining tree.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod csyip;
pub mod esg;
pub mod ingest;
pub mod pricer;

pub use calibrate::{
    fit_riskless_params, fit_risky_params, CalibrationError, FitOptions, RisklessParams, RiskyFit, RiskyParams,
};
pub use csyip::{build_csy_path, ChangeSeries, CsyError, CsyPath, FilterKind, SignValues};
pub use esg::{EsgError, EsgSeries, RelEsgSeries, SmootherConfig};
pub use ingest::{FiscalEsgTable, IngestError, PriceSeries, RateSeries, TradingCalendar};
pub use pricer::{
    price_european, price_surface, HedgeRatios, NodeState, OptionContract, Payoff, PriceSurface, PricingConfig,
    PricingError, PricingResult,
};

use thiserror::Error;

/// Broad failure categories, used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad options or out-of-budget requests.
    Config,
    /// Missing, malformed or degenerate input data.
    Data,
    /// The fitted model breaks a validity condition at a reachable state.
    ModelValidity,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Esg(#[from] EsgError),
    #[error(transparent)]
    Csy(#[from] CsyError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Ingest(_) | Error::Esg(_) => ErrorClass::Data,
            Error::Csy(CsyError::NegativeVolatility { .. }) => ErrorClass::ModelValidity,
            Error::Csy(CsyError::InvalidDelta(_) | CsyError::InvalidFilter(_)) => ErrorClass::Config,
            Error::Csy(_) => ErrorClass::Data,
            Error::Calibration(CalibrationError::NonpositiveVolatility(_)) => ErrorClass::ModelValidity,
            Error::Calibration(CalibrationError::InvalidDelta(_) | CalibrationError::NonpositiveBandwidth(_)) => {
                ErrorClass::Config
            }
            Error::Calibration(_) => ErrorClass::Data,
            Error::Pricing(e) if e.is_model_validity() => ErrorClass::ModelValidity,
            Error::Pricing(_) => ErrorClass::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

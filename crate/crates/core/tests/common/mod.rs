#![allow(dead_code)]

use bbsm_core::calibrate::{RisklessParams, RiskyParams};
use bbsm_core::csyip::{build_csy_path, simulate_market_index, CsyPath, FilterKind, MarketIndexParams};
use bbsm_core::pricer::PricingConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A parameter set for tree tests. Admissibility (η > 0, q in (0, 1) at every
/// node) is checked by the caller, which prices and redraws on error.
#[derive(Debug, Clone)]
pub struct Draw {
    pub params: RiskyParams,
    pub riskless: RisklessParams,
    pub cfg: PricingConfig,
}

pub fn random_draw(rng: &mut ChaCha8Rng, max_maturity: usize) -> Draw {
    let a0 = rng.random_range(20.0..200.0);
    let delta = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
    let params = RiskyParams::new(
        rng.random_range(-1e-3..1e-3) * a0,
        rng.random_range(-5e-4..5e-4),
        rng.random_range(0.0..0.01) * a0,
        rng.random_range(0.005..0.02),
        rng.random_range(-3e-3..3e-3) * a0,
    );
    let riskless = RisklessParams::new(rng.random_range(-1e-3..1e-3), rng.random_range(0.0..1e-3));
    let filter = if rng.random_bool(0.8) {
        FilterKind::Power {
            d: rng.random_range(5.0..20.0),
        }
    } else {
        FilterKind::Gaussian {
            sigma_h: rng.random_range(1.0..5.0),
        }
    };
    let cfg = PricingConfig::new(
        delta,
        rng.random_range(0.4..0.6),
        rng.random_range(-3.0..3.0),
        filter,
        a0,
        &riskless,
        max_maturity,
    );
    Draw { params, riskless, cfg }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn index_path(n: usize, seed: u64) -> CsyPath {
    let p = MarketIndexParams {
        a: 0.02,
        mu: 0.0003,
        v: 0.5,
        sigma: 0.01,
        p0: 0.53,
        p1: 0.0,
        p2: 0.0,
        a0: 100.0,
    };
    let idx = simulate_market_index(&p, n, 1.0, seed).unwrap();
    build_csy_path(&idx, &FilterKind::default(), 1.0).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

//! Black–Scholes and normal-model call values used as limit oracles.

use statrs::function::erf::erfc;

use super::{PricingError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(PricingError::InvalidInput(format!("{name} = {v} is not finite")))
    }
}

/// Black–Scholes call with per-step volatility and rate, over `T·Δ` time units.
pub fn bsm_closed_form(a0: f64, strike: f64, t_days: usize, sigma_daily: f64, r_daily: f64, delta: f64) -> Result<f64> {
    for (n, v) in [
        ("a0", a0),
        ("strike", strike),
        ("sigma", sigma_daily),
        ("r", r_daily),
        ("delta", delta),
    ] {
        check_finite(n, v)?;
    }
    if !(a0 > 0.0) {
        return Err(PricingError::InvalidInput(format!("a0 = {a0} must be positive")));
    }
    if !(sigma_daily > 0.0) {
        return Err(PricingError::InvalidInput(format!(
            "sigma = {sigma_daily} must be positive"
        )));
    }
    if !(delta > 0.0) {
        return Err(PricingError::InvalidInput(format!("delta = {delta} must be positive")));
    }
    let tau = t_days as f64 * delta;
    let disc = (-r_daily * tau).exp();
    if strike <= 0.0 {
        return Ok(a0 - strike * disc);
    }
    if tau == 0.0 {
        return Ok((a0 - strike).max(0.0));
    }
    let s = sigma_daily * tau.sqrt();
    let d1 = ((a0 / strike).ln() + r_daily * tau) / s + 0.5 * s;
    let d2 = d1 - s;
    Ok(a0 * normal_cdf(d1) - strike * disc * normal_cdf(d2))
}

/// Normal-model call at zero rate: `(a0-K)Φ(d) + s φ(d)`, `s = v sqrt(TΔ)`.
pub fn bachelier_closed_form(a0: f64, strike: f64, t_days: usize, v_daily: f64, delta: f64) -> Result<f64> {
    for (n, v) in [("a0", a0), ("strike", strike), ("v", v_daily), ("delta", delta)] {
        check_finite(n, v)?;
    }
    if !(v_daily > 0.0) {
        return Err(PricingError::InvalidInput(format!("v = {v_daily} must be positive")));
    }
    if !(delta > 0.0) {
        return Err(PricingError::InvalidInput(format!("delta = {delta} must be positive")));
    }
    let s = v_daily * (t_days as f64 * delta).sqrt();
    if s == 0.0 {
        return Ok((a0 - strike).max(0.0));
    }
    let d = (a0 - strike) / s;
    Ok((a0 - strike) * normal_cdf(d) + s * normal_pdf(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bsm_reference_values() {
        let c = bsm_closed_form(100.0, 100.0, 20, 0.01, 0.0, 1.0).unwrap();
        assert!((c - 1.783_975_450_3).abs() < 1e-9, "{c}");
        let c = bsm_closed_form(100.0, 100.0, 20, 0.01, 0.0002, 1.0).unwrap();
        assert!((c - 1.987_130_875_18).abs() < 1e-9, "{c}");
    }

    #[test]
    fn bsm_limits() {
        let c = bsm_closed_form(100.0, 1e-12, 20, 0.01, 0.0, 1.0).unwrap();
        assert!((c - 100.0).abs() < 1e-9);
        assert_eq!(bsm_closed_form(100.0, 0.0, 20, 0.01, 0.0, 1.0).unwrap(), 100.0);
        assert!(bsm_closed_form(100.0, 1000.0, 5, 0.01, 0.0, 1.0).unwrap() < 1e-8 * 100.0);
        assert!(bsm_closed_form(0.0, 1.0, 5, 0.01, 0.0, 1.0).is_err());
        assert!(bsm_closed_form(1.0, 1.0, 5, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn bachelier_values() {
        let atm = bachelier_closed_form(100.0, 100.0, 16, 1.0, 1.0).unwrap();
        assert!((atm - 4.0 * INV_SQRT_2PI).abs() < 1e-14);
        let c = bachelier_closed_form(100.0, 98.0, 16, 1.0, 1.0).unwrap();
        assert!((c - 2.791_186_229_60).abs() < 1e-9, "{c}");
        let c = bachelier_closed_form(100.0, 98.0, 16, 1e-12, 1.0).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
        let c = bachelier_closed_form(100.0, 102.0, 16, 1e-12, 1.0).unwrap();
        assert!(c.abs() < 1e-12);
        assert!(bachelier_closed_form(100.0, 98.0, 16, 0.0, 1.0).is_err());
    }

    #[test]
    fn cdf_symmetry() {
        for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }
}

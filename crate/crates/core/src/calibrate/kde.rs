//! Gaussian kernel density estimates for comparing empirical and fitted
//! price-change distributions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::CalibrationError;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Grid padding beyond the pooled data range, in bandwidths.
pub const GRID_PADDING_BANDWIDTHS: f64 = 6.0;
const MIN_GRID_POINTS: usize = 512;
const MAX_GRID_POINTS: usize = 1 << 20;

/// Two densities evaluated on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub grid: Vec<f64>,
    pub empirical_pdf: Vec<f64>,
    pub model_pdf: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityPair {
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "empirical_pdf", "model_pdf", "bandwidth"])?;
        for i in 0..self.grid.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.empirical_pdf[i].to_string(),
                self.model_pdf[i].to_string(),
                self.bandwidth.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 1.0;
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (_, sd) = crate::csyip::mean_std(data);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * (n as f64).powf(-0.2);
    if bw > 0.0 {
        bw
    } else {
        1.0
    }
}

/// Silverman's bandwidth doubled. The Bernoulli-driven changes are a mixture
/// of two lumps; the wider kernel smooths it into one comparable density.
pub fn default_bandwidth(data: &[f64]) -> f64 {
    2.0 * silverman_bandwidth(data)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian KDE of `data` at each grid point.
pub fn gaussian_kde(data: &[f64], grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reach = 9.0 * bandwidth;
    let norm = INV_SQRT_2PI / (bandwidth * data.len() as f64);
    grid.iter()
        .map(|&g| {
            let lo = sorted.partition_point(|v| *v < g - reach);
            let hi = sorted.partition_point(|v| *v <= g + reach);
            sorted[lo..hi]
                .iter()
                .map(|v| {
                    let u = (g - v) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Densities of both series on a grid spanning their pooled range padded by
/// [`GRID_PADDING_BANDWIDTHS`] bandwidths, with spacing at most half a bandwidth.
pub fn kde_compare(empirical: &[f64], model: &[f64], bandwidth: f64) -> Result<DensityPair, CalibrationError> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(CalibrationError::NonpositiveBandwidth(bandwidth));
    }
    if empirical.is_empty() || model.is_empty() {
        return Err(CalibrationError::TooFewObservations { needed: 1, got: 0 });
    }
    let (lo, hi) = empirical
        .iter()
        .chain(model)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let lo = lo - GRID_PADDING_BANDWIDTHS * bandwidth;
    let hi = hi + GRID_PADDING_BANDWIDTHS * bandwidth;
    let points = (((hi - lo) / (0.5 * bandwidth)).ceil() as usize + 1).clamp(MIN_GRID_POINTS, MAX_GRID_POINTS);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    Ok(DensityPair {
        empirical_pdf: gaussian_kde(empirical, &grid, bandwidth),
        model_pdf: gaussian_kde(model, &grid, bandwidth),
        grid,
        bandwidth,
    })
}

/// Trapezoid-rule integral of `f` over `grid`.
pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

//! Run configuration: command-line flags merged over an optional JSON file,
//! then resolved to concrete values and hashed for artifact naming.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bbsm_core::csyip::FilterKind;
use bbsm_core::esg::SmootherConfig;
use bbsm_core::pricer::DEFAULT_MAX_MATURITY;

use crate::error::CliError;

/// Every option any subcommand accepts. Unset fields fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON file holding any of these options; explicit flags win.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Ticker(s) to run; with --manifest, defaults to every manifest entry.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ticker: Vec<String>,

    /// Stock price CSV (date, close).
    #[arg(long, value_name = "FILE")]
    pub prices: Option<PathBuf>,
    /// Market index price CSV (date, close).
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// Stock fiscal-year ESG CSV (fiscal_year, score).
    #[arg(long, value_name = "FILE")]
    pub esg: Option<PathBuf>,
    /// Market fiscal-year ESG CSV; alternative to --weights.
    #[arg(long, value_name = "FILE")]
    pub market_esg: Option<PathBuf>,
    /// JSON map ticker -> {prices, esg}.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Index weights: JSON {ticker: weight} or CSV (effective_date, ticker, weight).
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Treasury yield CSV (date, annualized yield).
    #[arg(long, value_name = "FILE")]
    pub rates: Option<PathBuf>,
    /// Yields are in percent.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent: Option<bool>,

    /// Power filter scale d in h(x) = sign(x)|x/d|^0.6.
    #[arg(long)]
    pub d: Option<f64>,
    /// Use the Gaussian filter with this width instead of the power filter.
    #[arg(long)]
    pub filter_sigma: Option<f64>,
    /// Time step in trading days.
    #[arg(long)]
    pub delta: Option<f64>,
    /// ESG affinities to value under.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gamma_esg: Vec<f64>,
    /// ESG smoother window in trading days.
    #[arg(long)]
    pub esg_window: Option<usize>,
    /// ESG smoother Gaussian width in trading days.
    #[arg(long)]
    pub esg_sigma: Option<f64>,
    /// KDE bandwidth; defaults to twice Silverman's rule.
    #[arg(long)]
    pub bandwidth: Option<f64>,

    /// Call strikes, comma separated; required by `price`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub strikes: Vec<f64>,
    /// Maturities in trading days.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub maturities: Vec<usize>,
    /// Tree levels split into parallel subtrees.
    #[arg(long)]
    pub split_depth: Option<usize>,
    /// Largest maturity accepted; each extra step doubles the tree.
    #[arg(long)]
    pub max_maturity: Option<usize>,
    /// Index path value at the pricing date; defaults to the last historical value.
    #[arg(long, allow_negative_numbers = true)]
    pub x_init: Option<f64>,

    /// RNG seed for `simulate`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of simulated steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Standard deviation of Gaussian noise added to simulated stock changes.
    #[arg(long)]
    pub noise: Option<f64>,
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

fn pick_vec<T: Clone>(flag: &[T], file: &[T]) -> Vec<T> {
    if flag.is_empty() {
        file.to_vec()
    } else {
        flag.to_vec()
    }
}

impl RunConfig {
    /// Overlays `self` (explicit flags) on the `--config` file, if any.
    /// Relative paths in the file resolve against the file's directory.
    pub fn merged(self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut file: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut file.prices,
            &mut file.index,
            &mut file.esg,
            &mut file.market_esg,
            &mut file.manifest,
            &mut file.weights,
            &mut file.rates,
            &mut file.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(RunConfig {
            config: None,
            out: pick(&self.out, &file.out),
            ticker: pick_vec(&self.ticker, &file.ticker),
            prices: pick(&self.prices, &file.prices),
            index: pick(&self.index, &file.index),
            esg: pick(&self.esg, &file.esg),
            market_esg: pick(&self.market_esg, &file.market_esg),
            manifest: pick(&self.manifest, &file.manifest),
            weights: pick(&self.weights, &file.weights),
            rates: pick(&self.rates, &file.rates),
            percent: pick(&self.percent, &file.percent),
            d: pick(&self.d, &file.d),
            filter_sigma: pick(&self.filter_sigma, &file.filter_sigma),
            delta: pick(&self.delta, &file.delta),
            gamma_esg: pick_vec(&self.gamma_esg, &file.gamma_esg),
            esg_window: pick(&self.esg_window, &file.esg_window),
            esg_sigma: pick(&self.esg_sigma, &file.esg_sigma),
            bandwidth: pick(&self.bandwidth, &file.bandwidth),
            strikes: pick_vec(&self.strikes, &file.strikes),
            maturities: pick_vec(&self.maturities, &file.maturities),
            split_depth: pick(&self.split_depth, &file.split_depth),
            max_maturity: pick(&self.max_maturity, &file.max_maturity),
            x_init: pick(&self.x_init, &file.x_init),
            seed: pick(&self.seed, &file.seed),
            steps: pick(&self.steps, &file.steps),
            noise: pick(&self.noise, &file.noise),
        })
    }

    pub fn resolve(&self, command: &'static str) -> Result<Resolved, CliError> {
        let filter = match (self.filter_sigma, self.d) {
            (Some(_), Some(_)) => return Err(CliError::Config("--d and --filter-sigma are mutually exclusive".into())),
            (Some(s), None) => FilterKind::Gaussian { sigma_h: s },
            (None, d) => FilterKind::Power { d: d.unwrap_or(10.0) },
        };
        filter.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let delta = self.delta.unwrap_or(1.0);
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CliError::Config(format!("--delta must be positive, got {delta}")));
        }
        let defaults = SmootherConfig::default();
        let smoother = SmootherConfig {
            window_days: self.esg_window.unwrap_or(defaults.window_days),
            gaussian_sigma_days: self.esg_sigma.unwrap_or(defaults.gaussian_sigma_days),
        };
        smoother.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(bw) = self.bandwidth {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(CliError::Config(format!("--bandwidth must be positive, got {bw}")));
            }
        }
        let gamma_esg = if self.gamma_esg.is_empty() {
            vec![0.0]
        } else {
            self.gamma_esg.clone()
        };
        if let Some(g) = gamma_esg.iter().find(|g| !g.is_finite()) {
            return Err(CliError::Config(format!("ESG affinity {g} is not finite")));
        }
        if let Some(k) = self.strikes.iter().find(|k| !k.is_finite()) {
            return Err(CliError::Config(format!("strike {k} is not finite")));
        }
        let max_maturity = self.max_maturity.unwrap_or(DEFAULT_MAX_MATURITY);
        if let Some(t) = self.maturities.iter().find(|t| **t > max_maturity) {
            return Err(CliError::Config(format!(
                "maturity {t} exceeds the budget of {max_maturity} steps: the tree has 2^T leaves \
                 (2^{t} here); raise --max-maturity or use a coarser --delta"
            )));
        }
        let noise = self.noise.unwrap_or(0.0);
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(CliError::Config(format!("--noise must be non-negative, got {noise}")));
        }
        Ok(Resolved {
            command,
            ticker: self.ticker.clone(),
            prices: self.prices.clone(),
            index: self.index.clone(),
            esg: self.esg.clone(),
            market_esg: self.market_esg.clone(),
            manifest: self.manifest.clone(),
            weights: self.weights.clone(),
            rates: self.rates.clone(),
            percent: self.percent.unwrap_or(false),
            filter,
            delta,
            gamma_esg,
            smoother,
            bandwidth: self.bandwidth,
            strikes: self.strikes.clone(),
            maturities: self.maturities.clone(),
            split_depth: self.split_depth.unwrap_or(4),
            max_maturity,
            x_init: self.x_init,
            seed: self.seed.unwrap_or(0),
            steps: self.steps.unwrap_or(2000),
            noise,
            inputs: Vec::new(),
        })
    }
}

/// Fully-defaulted configuration. Its JSON form is the parameter echo written
/// into every artifact, and its hash names the artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: &'static str,
    pub ticker: Vec<String>,
    pub prices: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub esg: Option<PathBuf>,
    pub market_esg: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub percent: bool,
    pub filter: FilterKind,
    pub delta: f64,
    pub gamma_esg: Vec<f64>,
    pub smoother: SmootherConfig,
    pub bandwidth: Option<f64>,
    pub strikes: Vec<f64>,
    pub maturities: Vec<usize>,
    pub split_depth: usize,
    pub max_maturity: usize,
    pub x_init: Option<f64>,
    pub seed: u64,
    pub steps: usize,
    pub noise: f64,
    /// SHA-256 of each input file actually read, in read order.
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl Resolved {
    /// Records the digest of an input file so the hash covers its contents.
    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        if self.inputs.iter().any(|i| i.path == path) {
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the parameter echo.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }
}

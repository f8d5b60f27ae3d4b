//! European option pricing on the non-recombining path-dependent tree.
//!
//! Each node carries the asset value `A` and the index path value `X`. Both
//! children are reached by additive moves, so paths never merge and a
//! maturity-`T` tree has `2^T` leaves. The price is computed by a post-order
//! depth-first traversal with one reusable frame per depth, so live state is
//! `O(T)` no matter how many nodes are visited. All strikes at one maturity
//! share a traversal: leaves evaluate a vector of payoffs and the backward
//! step discounts the whole vector.

mod closed_form;
mod enumerate;
mod surface;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{RisklessParams, RiskyParams};
use crate::csyip::{h_eval, FilterKind, SignValues};

pub use closed_form::{bachelier_closed_form, bsm_closed_form, normal_cdf, normal_pdf};
pub use enumerate::{enumerate_tree, EnumeratedTree, MAX_ENUMERATION_MATURITY};
pub use surface::{
    price_surface, strike_for_price, strike_shift_diagnostic, write_surfaces_csv, PriceSurface, StrikeShift, SurfaceRow,
};

/// Default ceiling on maturity (in steps) for tree pricing.
pub const DEFAULT_MAX_MATURITY: usize = 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("conditional volatility eta = {eta:e} < 0 at node (k = {k}, A = {a}, X = {x})")]
    NegativeConditionalVolatility { k: usize, a: f64, x: f64, eta: f64 },
    #[error("conditional volatility is zero at node (k = {k}, A = {a}, X = {x}); risk-neutral probability undefined")]
    ZeroConditionalVolatility { k: usize, a: f64, x: f64 },
    #[error(
        "risk-neutral probability q = {q} outside (0, 1) at node (k = {k}, A = {a}, X = {x}); try a smaller time step"
    )]
    QOutOfRange { k: usize, a: f64, x: f64, q: f64 },
    #[error("maturity {maturity} exceeds the 2^T budget of {max} steps")]
    MaturityBeyondBudget { maturity: usize, max: usize },
    #[error("maturity {0} exceeds the enumeration cap of {MAX_ENUMERATION_MATURITY}")]
    MaturityTooLargeForEnumeration(usize),
    #[error("riskless path has {got} values, need {needed}")]
    BetaPathTooShort { needed: usize, got: usize },
    #[error("riskless value is zero at step {0}")]
    ZeroBeta(usize),
    #[error("all options in one traversal must share a maturity")]
    MixedMaturities,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl PricingError {
    /// Errors that signal the model itself is invalid at some reachable state.
    pub fn is_model_validity(&self) -> bool {
        matches!(
            self,
            PricingError::NegativeConditionalVolatility { .. }
                | PricingError::ZeroConditionalVolatility { .. }
                | PricingError::QOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, PricingError>;

/// Terminal payoff `g(A_T)`.
#[derive(Clone)]
pub enum Payoff {
    Call,
    Put,
    /// Arbitrary terminal function; the strike is ignored.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Payoff {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Payoff::Custom(Arc::new(f))
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call => f.write_str("Call"),
            Payoff::Put => f.write_str("Put"),
            Payoff::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptionContract {
    pub payoff: Payoff,
    pub strike: f64,
    /// Maturity in tree steps.
    pub maturity: usize,
    /// Affinity the underlying was valued under; carried for reporting.
    pub gamma_esg: f64,
}

impl OptionContract {
    pub fn call(strike: f64, maturity: usize) -> Self {
        Self {
            payoff: Payoff::Call,
            strike,
            maturity,
            gamma_esg: 0.0,
        }
    }

    pub fn put(strike: f64, maturity: usize) -> Self {
        Self {
            payoff: Payoff::Put,
            strike,
            maturity,
            gamma_esg: 0.0,
        }
    }

    pub fn custom(maturity: usize, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            payoff: Payoff::custom(g),
            strike: f64::NAN,
            maturity,
            gamma_esg: 0.0,
        }
    }

    #[inline]
    pub fn terminal(&self, a: f64) -> f64 {
        match &self.payoff {
            Payoff::Call => (a - self.strike).max(0.0),
            Payoff::Put => (self.strike - a).max(0.0),
            Payoff::Custom(g) => g(a),
        }
    }
}

/// Everything about the tree that is not a fitted coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub delta: f64,
    pub up_prob: f64,
    /// Index path value `X` at the pricing date.
    pub x_init: f64,
    pub filter: FilterKind,
    pub a0: f64,
    /// `β_0, β_1, ...`; at least `T + 1` values for maturity `T`.
    pub beta_path: Vec<f64>,
    /// Levels near the root evaluated as independent parallel subtrees.
    pub split_depth: usize,
    pub max_maturity: usize,
}

impl PricingConfig {
    /// Builds the riskless path from `β0 = a0` out to `max_maturity` steps.
    pub fn new(
        delta: f64,
        up_prob: f64,
        x_init: f64,
        filter: FilterKind,
        a0: f64,
        riskless: &RisklessParams,
        max_maturity: usize,
    ) -> Self {
        Self {
            delta,
            up_prob,
            x_init,
            filter,
            a0,
            beta_path: riskless.beta_path(a0, max_maturity, delta),
            split_depth: 0,
            max_maturity,
        }
    }

    pub fn with_split_depth(mut self, depth: usize) -> Self {
        self.split_depth = depth;
        self
    }

    pub fn beta0(&self) -> f64 {
        self.beta_path[0]
    }

    fn validate(&self, maturity: usize) -> Result<()> {
        if !(self.up_prob > 0.0 && self.up_prob < 1.0) {
            return Err(PricingError::InvalidInput(format!(
                "up probability {} outside (0, 1)",
                self.up_prob
            )));
        }
        if !(self.delta > 0.0) {
            return Err(PricingError::InvalidInput(format!(
                "time step {} must be positive",
                self.delta
            )));
        }
        if maturity > self.max_maturity {
            return Err(PricingError::MaturityBeyondBudget {
                maturity,
                max: self.max_maturity,
            });
        }
        if self.beta_path.len() < maturity + 1 {
            return Err(PricingError::BetaPathTooShort {
                needed: maturity + 1,
                got: self.beta_path.len(),
            });
        }
        if let Some(k) = self.beta_path[..=maturity].iter().position(|b| *b == 0.0) {
            return Err(PricingError::ZeroBeta(k));
        }
        Ok(())
    }
}

/// A tree node: depth, asset value, index path value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub k: usize,
    pub a: f64,
    pub x: f64,
}

impl NodeState {
    pub fn root(cfg: &PricingConfig) -> Self {
        Self {
            k: 0,
            a: cfg.a0,
            x: cfg.x_init,
        }
    }
}

/// Units of asset and riskless holding that replicate the option over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeRatios {
    pub asset_units: f64,
    pub riskless_units: f64,
}

/// Up and down children of `node` and the conditional volatility there.
pub fn branch(node: &NodeState, params: &RiskyParams, cfg: &PricingConfig) -> Result<(NodeState, NodeState, f64)> {
    let sv = SignValues::new(cfg.up_prob).map_err(|e| PricingError::InvalidInput(e.to_string()))?;
    branch_with(node, params, cfg, &sv, cfg.delta.sqrt())
}

#[inline]
fn branch_with(
    node: &NodeState,
    params: &RiskyParams,
    cfg: &PricingConfig,
    sv: &SignValues,
    sqrt_dt: f64,
) -> Result<(NodeState, NodeState, f64)> {
    let eta = params.eta(node.a, h_eval(node.x, &cfg.filter));
    if eta < 0.0 {
        return Err(PricingError::NegativeConditionalVolatility {
            k: node.k,
            a: node.a,
            x: node.x,
            eta,
        });
    }
    let drift = params.phi(node.a) * cfg.delta;
    let shock = eta * sqrt_dt;
    let up = NodeState {
        k: node.k + 1,
        a: node.a + drift + shock * sv.up,
        x: node.x + sqrt_dt * sv.up,
    };
    let down = NodeState {
        k: node.k + 1,
        a: node.a + drift - shock * sv.down,
        x: node.x - sqrt_dt * sv.down,
    };
    Ok((up, down, eta))
}

/// Conditional risk-neutral up-probability
/// `q = p - (φ - Aχ/β)/η · sqrt(p(1-p)Δ)`.
pub fn risk_neutral_prob(
    node: &NodeState,
    eta: f64,
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> Result<f64> {
    let beta = *cfg.beta_path.get(node.k).ok_or(PricingError::BetaPathTooShort {
        needed: node.k + 1,
        got: cfg.beta_path.len(),
    })?;
    let p = cfg.up_prob;
    q_at(
        node,
        eta,
        params,
        riskless,
        cfg.beta0(),
        beta,
        p,
        (p * (1.0 - p) * cfg.delta).sqrt(),
    )
}

/// The first algebraic form, `[η ξ_d + (χA/β - φ)√Δ] sqrt(p(1-p)) / η`.
pub fn risk_neutral_prob_alt(
    node: &NodeState,
    eta: f64,
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> f64 {
    let p = cfg.up_prob;
    let xi_d = (p / (1.0 - p)).sqrt();
    let beta = cfg.beta_path[node.k];
    let chi = riskless.chi(cfg.beta0(), beta);
    (eta * xi_d + (chi / beta * node.a - params.phi(node.a)) * cfg.delta.sqrt()) * (p * (1.0 - p)).sqrt() / eta
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn q_at(
    node: &NodeState,
    eta: f64,
    params: &RiskyParams,
    riskless: &RisklessParams,
    beta0: f64,
    beta: f64,
    p: f64,
    spread: f64,
) -> Result<f64> {
    if eta == 0.0 {
        return Err(PricingError::ZeroConditionalVolatility {
            k: node.k,
            a: node.a,
            x: node.x,
        });
    }
    if eta < 0.0 {
        return Err(PricingError::NegativeConditionalVolatility {
            k: node.k,
            a: node.a,
            x: node.x,
            eta,
        });
    }
    if beta == 0.0 {
        return Err(PricingError::ZeroBeta(node.k));
    }
    let chi = riskless.chi(beta0, beta);
    let q = p - (params.phi(node.a) - node.a * chi / beta) / eta * spread;
    if !(q > 0.0 && q < 1.0) {
        return Err(PricingError::QOutOfRange {
            k: node.k,
            a: node.a,
            x: node.x,
            q,
        });
    }
    Ok(q)
}

/// One backward step's ingredients at a node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub up: NodeState,
    pub down: NodeState,
    pub q: f64,
    pub discount: f64,
}

/// Immutable pricing context shared by every traversal.
pub(crate) struct Tree<'a> {
    params: &'a RiskyParams,
    riskless: &'a RisklessParams,
    cfg: &'a PricingConfig,
    sv: SignValues,
    sqrt_dt: f64,
    spread: f64,
    pub(crate) maturity: usize,
}

impl<'a> Tree<'a> {
    pub(crate) fn new(
        params: &'a RiskyParams,
        riskless: &'a RisklessParams,
        cfg: &'a PricingConfig,
        maturity: usize,
    ) -> Result<Self> {
        cfg.validate(maturity)?;
        let sv = SignValues::new(cfg.up_prob).map_err(|e| PricingError::InvalidInput(e.to_string()))?;
        let p = cfg.up_prob;
        Ok(Self {
            params,
            riskless,
            cfg,
            sv,
            sqrt_dt: cfg.delta.sqrt(),
            spread: (p * (1.0 - p) * cfg.delta).sqrt(),
            maturity,
        })
    }

    #[inline]
    pub(crate) fn step(&self, node: &NodeState) -> Result<Step> {
        let (up, down, eta) = branch_with(node, self.params, self.cfg, &self.sv, self.sqrt_dt)?;
        let beta = self.cfg.beta_path[node.k];
        let q = q_at(
            node,
            eta,
            self.params,
            self.riskless,
            self.cfg.beta0(),
            beta,
            self.cfg.up_prob,
            self.spread,
        )?;
        Ok(Step {
            up,
            down,
            q,
            discount: beta / self.cfg.beta_path[node.k + 1],
        })
    }
}

#[inline]
pub(crate) fn combine(out: &mut [f64], up: &[f64], down: &[f64], q: f64, discount: f64) {
    for ((o, u), d) in out.iter_mut().zip(up).zip(down) {
        *o = discount * (q * u + (1.0 - q) * d);
    }
}

/// Counters gathered during a traversal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalStats {
    pub nodes_visited: u64,
    /// Largest number of simultaneously live node frames in any one serial
    /// traversal.
    pub peak_live_frames: usize,
}

impl TraversalStats {
    fn merge(self, other: Self) -> Self {
        Self {
            nodes_visited: self.nodes_visited + other.nodes_visited,
            peak_live_frames: self.peak_live_frames.max(other.peak_live_frames),
        }
    }
}

#[derive(Debug, Clone)]
struct Frame {
    node: NodeState,
    stage: u8,
    step: Option<Step>,
    up_vals: Vec<f64>,
    vals: Vec<f64>,
}

/// Values at a subtree root, with the children's values kept for hedging.
struct SubtreeValue {
    vals: Vec<f64>,
    children: Option<(Step, Vec<f64>, Vec<f64>)>,
    stats: TraversalStats,
}

/// Post-order traversal from `start` with an explicit stack of `T - k + 1` frames.
fn dfs(tree: &Tree, start: NodeState, options: &[OptionContract]) -> Result<SubtreeValue> {
    let m = options.len();
    let depth_max = tree.maturity - start.k;
    let mut frames: Vec<Frame> = (0..=depth_max)
        .map(|_| Frame {
            node: start,
            stage: 0,
            step: None,
            up_vals: vec![0.0; m],
            vals: vec![0.0; m],
        })
        .collect();
    let mut stats = TraversalStats::default();
    let mut root_children: Option<(Step, Vec<f64>, Vec<f64>)> = None;
    let mut depth = 0usize;
    frames[0].node = start;
    frames[0].stage = 0;
    loop {
        let (head, tail) = frames.split_at_mut(depth + 1);
        let f = &mut head[depth];
        if f.stage == 0 {
            stats.nodes_visited += 1;
            stats.peak_live_frames = stats.peak_live_frames.max(depth + 1);
        }
        if f.node.k == tree.maturity {
            for (v, o) in f.vals.iter_mut().zip(options) {
                *v = o.terminal(f.node.a);
            }
            if depth == 0 {
                break;
            }
            depth -= 1;
            continue;
        }
        match f.stage {
            0 => {
                let step = tree.step(&f.node)?;
                f.step = Some(step);
                f.stage = 1;
                tail[0].node = step.up;
                tail[0].stage = 0;
                depth += 1;
            }
            1 => {
                f.up_vals.copy_from_slice(&tail[0].vals);
                f.stage = 2;
                tail[0].node = f.step.expect("step set at stage 0").down;
                tail[0].stage = 0;
                depth += 1;
            }
            _ => {
                let step = f.step.expect("step set at stage 0");
                combine(&mut f.vals, &f.up_vals, &tail[0].vals, step.q, step.discount);
                if depth == 0 {
                    root_children = Some((step, f.up_vals.clone(), tail[0].vals.clone()));
                    break;
                }
                depth -= 1;
            }
        }
    }
    Ok(SubtreeValue {
        vals: std::mem::take(&mut frames[0].vals),
        children: root_children,
        stats,
    })
}

/// Splits the top `split` levels into independent subtrees evaluated with
/// `rayon::join`; results combine in a fixed order, so the output is bitwise
/// identical to the serial traversal.
fn evaluate(tree: &Tree, node: NodeState, options: &[OptionContract], split: usize) -> Result<SubtreeValue> {
    if split == 0 || node.k == tree.maturity {
        return dfs(tree, node, options);
    }
    let step = tree.step(&node)?;
    let (up, down) = rayon::join(
        || evaluate(tree, step.up, options, split - 1),
        || evaluate(tree, step.down, options, split - 1),
    );
    let (up, down) = (up?, down?);
    let mut vals = vec![0.0; options.len()];
    combine(&mut vals, &up.vals, &down.vals, step.q, step.discount);
    let mut stats = up.stats.merge(down.stats);
    stats.nodes_visited += 1;
    stats.peak_live_frames = stats.peak_live_frames.max(1);
    Ok(SubtreeValue {
        vals,
        children: Some((step, up.vals, down.vals)),
        stats,
    })
}

/// Result of pricing one option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub price: f64,
    /// `None` at `T = 0`, where no step remains to hedge.
    pub root_hedge: Option<HedgeRatios>,
    pub stats: TraversalStats,
}

/// Prices several options of one maturity in a single traversal.
pub fn price_many(
    options: &[OptionContract],
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> Result<Vec<PricingResult>> {
    let Some(first) = options.first() else {
        return Ok(Vec::new());
    };
    let maturity = first.maturity;
    if options.iter().any(|o| o.maturity != maturity) {
        return Err(PricingError::MixedMaturities);
    }
    let tree = Tree::new(params, riskless, cfg, maturity)?;
    let root = NodeState::root(cfg);
    let value = evaluate(&tree, root, options, cfg.split_depth.min(maturity))?;
    let beta1 = cfg.beta_path.get(1).copied();
    Ok((0..options.len())
        .map(|j| {
            let root_hedge = value.children.as_ref().map(|(step, up, down)| {
                let asset_units = (up[j] - down[j]) / (step.up.a - step.down.a);
                HedgeRatios {
                    asset_units,
                    riskless_units: (up[j] - asset_units * step.up.a) / beta1.expect("T >= 1"),
                }
            });
            PricingResult {
                price: value.vals[j],
                root_hedge,
                stats: value.stats,
            }
        })
        .collect())
}

/// Prices one European option by backward induction over the full tree.
pub fn price_european(
    option: &OptionContract,
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> Result<PricingResult> {
    Ok(price_many(std::slice::from_ref(option), params, riskless, cfg)?
        .pop()
        .expect("one option in, one result out"))
}

//! Level-by-level storage of the whole tree. Exponential in memory; kept as a
//! cross-check for the streaming traversal.

use super::{combine, NodeState, OptionContract, PricingConfig, PricingError, Result, Tree};
use crate::calibrate::{RisklessParams, RiskyParams};

pub const MAX_ENUMERATION_MATURITY: usize = 16;

/// Every node of the tree. Node `j` at level `i` has children `2j` (up) and
/// `2j + 1` (down) at level `i + 1`.
#[derive(Debug, Clone)]
pub struct EnumeratedTree {
    pub levels: Vec<Vec<NodeState>>,
    /// Risk-neutral up-probability per non-terminal node.
    pub q: Vec<Vec<f64>>,
    /// Option value per node.
    pub values: Vec<Vec<f64>>,
    pub price: f64,
}

pub fn enumerate_tree(
    option: &OptionContract,
    params: &RiskyParams,
    riskless: &RisklessParams,
    cfg: &PricingConfig,
) -> Result<EnumeratedTree> {
    let maturity = option.maturity;
    if maturity > MAX_ENUMERATION_MATURITY {
        return Err(PricingError::MaturityTooLargeForEnumeration(maturity));
    }
    let tree = Tree::new(params, riskless, cfg, maturity)?;
    let mut levels = vec![vec![NodeState::root(cfg)]];
    let mut q = Vec::with_capacity(maturity);
    let mut discount = Vec::with_capacity(maturity);
    for _ in 0..maturity {
        let last = levels.last().expect("root level");
        let mut next = Vec::with_capacity(2 * last.len());
        let mut ql = Vec::with_capacity(last.len());
        let mut dl = Vec::with_capacity(last.len());
        for node in last {
            let step = tree.step(node)?;
            next.push(step.up);
            next.push(step.down);
            ql.push(step.q);
            dl.push(step.discount);
        }
        levels.push(next);
        q.push(ql);
        discount.push(dl);
    }
    let mut values = vec![Vec::new(); maturity + 1];
    values[maturity] = levels[maturity].iter().map(|n| option.terminal(n.a)).collect();
    for i in (0..maturity).rev() {
        let child = &values[i + 1];
        let mut out = vec![0.0; levels[i].len()];
        for j in 0..out.len() {
            combine(
                &mut out[j..=j],
                &child[2 * j..=2 * j],
                &child[2 * j + 1..=2 * j + 1],
                q[i][j],
                discount[i][j],
            );
        }
        values[i] = out;
    }
    let price = values[0][0];
    Ok(EnumeratedTree {
        levels,
        q,
        values,
        price,
    })
}

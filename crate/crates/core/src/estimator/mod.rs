// SPDX-License-Identifier: Apache-2.0

//! Success probability of a search strategy, estimated from fully recorded
//! search trees, and the cost/success trade-off across strategies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Probability;
use crate::search::{SearchNode, Strategy, StrategyKind};

/// A search tree sampled with constant branching `k_max` to depth `d_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedTree {
    pub root: SearchNode,
    #[serde(rename = "K_max")]
    pub k_max: u32,
    #[serde(rename = "D_max")]
    pub d_max: u32,
}

impl RecordedTree {
    /// Wraps a root, checking that every non-success node above `d_max` has
    /// exactly `k_max` children and nothing lies below `d_max`.
    pub fn new(root: SearchNode, k_max: u32, d_max: u32) -> Result<Self> {
        root.check_structure()?;
        for node in root.walk() {
            let expected = if node.success || node.depth >= d_max {
                0
            } else {
                k_max as usize
            };
            if node.children.len() != expected {
                return Err(Error::Invalid(format!(
                    "node `{}` at depth {} has {} children, expected {expected}",
                    node.node_id,
                    node.depth,
                    node.children.len()
                )));
            }
        }
        Ok(RecordedTree { root, k_max, d_max })
    }

    /// Infers `k_max` from the root and `d_max` from the deepest node.
    pub fn infer(root: SearchNode) -> Result<Self> {
        let k_max = root.children.len() as u32;
        let d_max = root.max_depth();
        Self::new(root, k_max, d_max)
    }

    /// Reads either a bare tree or `{root, K_max, D_max}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("root").is_some() {
            let t: RecordedTree = serde_json::from_value(value)?;
            Self::new(t.root, t.k_max, t.d_max)
        } else {
            let root: SearchNode = serde_json::from_value(value)?;
            Self::infer(root)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn supports(&self, strategy: &Strategy) -> bool {
        strategy.fits(self.k_max, self.d_max)
    }
}

/// Probability that `strategy`, run from `node`, reaches a differentiating
/// probe, when its children are drawn from the recorded ones.
///
/// The mean over all size-`b` child subsets of `1 - prod(1 - sigma_j)` is
/// `1 - e_b(1 - sigma) / C(n, b)`, where `e_b` is the elementary symmetric
/// polynomial; that is evaluated exactly, each child once.
pub fn sigma<T: Probability>(node: &SearchNode, strategy: &Strategy) -> Result<T> {
    if node.success {
        return Ok(T::one());
    }
    if node.depth >= strategy.d {
        return Ok(T::zero());
    }
    let b = strategy.branching_at(node.depth + 1)?;
    let n = node.children.len() as u64;
    if b > n {
        return Err(Error::contract(format!(
            "{strategy} needs {b} children below node `{}` (depth {}), recorded {n}",
            node.node_id, node.depth
        )));
    }
    let b = b as usize;
    // e[j] = elementary symmetric polynomial of degree j in the failure
    // probabilities seen so far
    let mut e = vec![T::zero(); b + 1];
    e[0] = T::one();
    for child in &node.children {
        let fail = T::one() - sigma::<T>(child, strategy)?;
        for j in (1..=b).rev() {
            e[j] = e[j].clone() + e[j - 1].clone() * fail.clone();
        }
    }
    let combos = binomial::<T>(n, b as u64);
    Ok(T::one() - e[b].clone() / combos)
}

fn binomial<T: Probability>(n: u64, k: u64) -> T {
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * T::from_count(n - i) / T::from_count(i + 1);
    }
    acc
}

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k<T: Probability>(n: u64, c: u64, k: u64) -> Result<T> {
    if c > n || k == 0 || k > n {
        return Err(Error::contract(format!(
            "pass@k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}"
        )));
    }
    if n - c < k {
        return Ok(T::one());
    }
    let mut miss = T::one();
    for i in 0..k {
        miss = miss * T::ratio(n - c - i, n - i);
    }
    Ok(T::one() - miss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyPoint<T> {
    pub strategy: Strategy,
    pub cost: u64,
    pub sigma: T,
}

impl<T: Probability> StrategyPoint<T> {
    /// Weakly better on both axes and strictly better on one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.cost <= other.cost
            && self.sigma >= other.sigma
            && (self.cost < other.cost || self.sigma > other.sigma)
    }
}

/// Non-dominated points sorted by cost. Of several points with identical
/// cost and sigma only the first in input order is kept, so cost is strictly
/// increasing along the front and sigma strictly increasing as well.
pub fn pareto_front<T: Probability>(points: &[StrategyPoint<T>]) -> Vec<StrategyPoint<T>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // cost ascending, sigma descending, input order for exact ties
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.cost
            .cmp(&pb.cost)
            .then_with(|| {
                pb.sigma
                    .partial_cmp(&pa.sigma)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    let mut front: Vec<StrategyPoint<T>> = Vec::new();
    for i in order {
        let p = &points[i];
        match front.last() {
            Some(best) if p.sigma <= best.sigma => {}
            _ => front.push(p.clone()),
        }
    }
    front
}

/// Mean sigma over `corpus` of every strategy in `kinds x k_range x d_range`.
pub fn evaluate_grid<T: Probability>(
    corpus: &[RecordedTree],
    kinds: &[StrategyKind],
    k_range: impl IntoIterator<Item = u32> + Clone,
    d_range: impl IntoIterator<Item = u32> + Clone,
) -> Result<Vec<StrategyPoint<T>>> {
    if corpus.is_empty() {
        return Err(Error::contract("strategy grid over an empty tree corpus"));
    }
    let mut points = Vec::new();
    for &kind in kinds {
        for k in k_range.clone() {
            for d in d_range.clone() {
                let strategy = Strategy::new(kind, k, d)?;
                points.push(evaluate_strategy(corpus, strategy)?);
            }
        }
    }
    Ok(points)
}

pub fn evaluate_strategy<T: Probability>(
    corpus: &[RecordedTree],
    strategy: Strategy,
) -> Result<StrategyPoint<T>> {
    let mut total = T::zero();
    for (i, tree) in corpus.iter().enumerate() {
        if strategy.d > tree.d_max {
            return Err(Error::contract(format!(
                "{strategy} deeper than tree {i} (D_max={})",
                tree.d_max
            )));
        }
        let s = sigma::<T>(&tree.root, &strategy)
            .map_err(|e| Error::contract(format!("tree {i}, {strategy}: {e}")))?;
        total = total + s;
    }
    Ok(StrategyPoint {
        strategy,
        cost: strategy.max_calls()?,
        sigma: total / T::from_count(corpus.len() as u64),
    })
}

/// One row of the emitted grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub kind: StrategyKind,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "D")]
    pub d: u32,
    pub cost: u64,
    pub sigma: f64,
    /// On the Pareto front of the points of the same kind.
    pub on_pareto_front: bool,
}

pub fn grid_rows<T: Probability>(points: &[StrategyPoint<T>]) -> Vec<GridRow> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let same_kind: Vec<_> = points
            .iter()
            .filter(|q| q.strategy.kind == p.strategy.kind)
            .cloned()
            .collect();
        let front = pareto_front(&same_kind);
        rows.push(GridRow {
            kind: p.strategy.kind,
            k: p.strategy.k,
            d: p.strategy.d,
            cost: p.cost,
            sigma: p.sigma.to_f64_lossy(),
            on_pareto_front: front.iter().any(|f| f.strategy == p.strategy),
        });
    }
    rows
}

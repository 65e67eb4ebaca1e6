// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Constant branching `K` at every depth.
    Full,
    /// `K` independent trajectories: branch at the first turn only.
    Top,
    /// `K`, `K-1`, ... down to 1.
    Decreasing,
    /// `K`, `K+1`, ...
    Increasing,
    /// `K`, `K/2`, ... down to 1.
    Halving,
    /// `K`, `2K`, `4K`, ...
    Doubling,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Full,
        StrategyKind::Top,
        StrategyKind::Decreasing,
        StrategyKind::Increasing,
        StrategyKind::Halving,
        StrategyKind::Doubling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Full => "full",
            StrategyKind::Top => "top",
            StrategyKind::Decreasing => "decreasing",
            StrategyKind::Increasing => "increasing",
            StrategyKind::Halving => "halving",
            StrategyKind::Doubling => "doubling",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown strategy kind `{s}`")))
    }
}

/// Branching schedule for the probe search tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "D")]
    pub d: u32,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy {
            kind: StrategyKind::Decreasing,
            k: 3,
            d: 4,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(K={}, D={})", self.kind, self.k, self.d)
    }
}

impl Strategy {
    pub fn new(kind: StrategyKind, k: u32, d: u32) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::contract(format!(
                "strategy needs K >= 1 and D >= 1, got K={k} D={d}"
            )));
        }
        Ok(Strategy { kind, k, d })
    }

    /// Number of probes sampled below each node at `depth` (1-based).
    pub fn branching_at(&self, depth: u32) -> Result<u64> {
        if depth == 0 || depth > self.d {
            return Err(Error::contract(format!(
                "depth {depth} outside 1..={} for {self}",
                self.d
            )));
        }
        let k = u64::from(self.k);
        let step = u64::from(depth - 1);
        let b = match self.kind {
            StrategyKind::Full => k,
            StrategyKind::Top => {
                if depth == 1 {
                    k
                } else {
                    1
                }
            }
            StrategyKind::Decreasing => k.saturating_sub(step).max(1),
            StrategyKind::Increasing => k
                .checked_add(step)
                .ok_or_else(|| Error::Overflow(format!("branching of {self} at depth {depth}")))?,
            StrategyKind::Halving => k.checked_shr(depth - 1).unwrap_or(0).max(1),
            StrategyKind::Doubling => 1u64
                .checked_shl(depth - 1)
                .and_then(|p| k.checked_mul(p))
                .ok_or_else(|| Error::Overflow(format!("branching of {self} at depth {depth}")))?,
        };
        Ok(b)
    }

    pub fn schedule(&self) -> Result<Vec<u64>> {
        (1..=self.d).map(|d| self.branching_at(d)).collect()
    }

    /// Non-root node count of the complete tree, i.e. the LLM calls of a
    /// search that never terminates early.
    pub fn max_calls(&self) -> Result<u64> {
        let overflow = || Error::Overflow(format!("node count of {self}"));
        let mut level = 1u64;
        let mut total = 0u64;
        for d in 1..=self.d {
            level = level.checked_mul(self.branching_at(d)?).ok_or_else(overflow)?;
            total = total.checked_add(level).ok_or_else(overflow)?;
        }
        Ok(total)
    }

    /// Whether a recorded tree with branching `k_max` and depth `d_max`
    /// supports this strategy.
    pub fn fits(&self, k_max: u32, d_max: u32) -> bool {
        self.d <= d_max
            && self
                .schedule()
                .map(|s| s.iter().all(|&b| b <= u64::from(k_max)))
                .unwrap_or(false)
    }
}

// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::OutcomeReport;
use crate::verdicts::Counterexample;

/// One probe in the search tree. The root holds no probe and has depth 0.
///
/// Serialized as `{node_id, depth, probe_source, rationale, outcome_digest,
/// success, children}`; `failure` and `findings` appear only when set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    /// Dot-joined sample indices from the root; empty for the root.
    pub node_id: String,
    pub depth: u32,
    #[serde(default)]
    pub probe_source: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub outcome_digest: Option<String>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Differentiating inputs seen at this node, with their verdicts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Counterexample>,
    #[serde(default)]
    pub children: Vec<SearchNode>,
    #[serde(skip)]
    pub report: Option<OutcomeReport>,
}

impl SearchNode {
    pub fn root() -> Self {
        Self::new(String::new(), 0)
    }

    pub fn new(node_id: String, depth: u32) -> Self {
        SearchNode {
            node_id,
            depth,
            probe_source: String::new(),
            rationale: String::new(),
            outcome_digest: None,
            success: false,
            failure: None,
            findings: Vec::new(),
            children: Vec::new(),
            report: None,
        }
    }

    pub fn child_id(&self, index: u64) -> String {
        if self.node_id.is_empty() {
            index.to_string()
        } else {
            format!("{}.{index}", self.node_id)
        }
    }

    /// Nodes below this one.
    pub fn descendant_count(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.descendant_count())
            .sum()
    }

    pub fn max_depth(&self) -> u32 {
        self.children
            .iter()
            .map(SearchNode::max_depth)
            .max()
            .unwrap_or(self.depth)
    }

    pub fn any_success(&self) -> bool {
        self.success || self.children.iter().any(SearchNode::any_success)
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&SearchNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    /// Structural checks shared by live and recorded trees: success nodes
    /// are leaves and depths increase by one.
    pub fn check_structure(&self) -> Result<()> {
        if self.success && !self.children.is_empty() {
            return Err(Error::Invalid(format!(
                "success node `{}` has children",
                self.node_id
            )));
        }
        for c in &self.children {
            if c.depth != self.depth + 1 {
                return Err(Error::Invalid(format!(
                    "node `{}` at depth {} under depth {}",
                    c.node_id, c.depth, self.depth
                )));
            }
            c.check_structure()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let node: SearchNode = serde_json::from_str(text)?;
        node.check_structure()?;
        Ok(node)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

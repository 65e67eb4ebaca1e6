// SPDX-License-Identifier: Apache-2.0

//! Multi-turn probe search: branching schedules, the depth-first driver and
//! the recorded tree.

mod engine;
mod strategy;
mod tree;

pub use engine::{
    record_full_tree, run_search, OnSpurious, SearchConfig, SearchContext, SearchResult,
    SearchStatus,
};
pub use strategy::{Strategy, StrategyKind};
pub use tree::SearchNode;

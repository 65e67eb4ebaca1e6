// SPDX-License-Identifier: Apache-2.0

//! Disproving functional equivalence of code implementations with
//! LLM-generated probes.
//!
//! The pipeline: a [`gateway`] samples input-generator *probes* from a model,
//! an [`harness::Executor`] runs them against two implementations, and the
//! [`search`] engine feeds execution results back to the model over a tree of
//! turns until a differentiating input is found. Differences the judge deems
//! irrelevant are filtered in [`verdicts`]. The [`estimator`] scores search
//! strategies on recorded trees, and [`clustering`] partitions many
//! implementations by observed behavior.
//!
//! Probability-valued code is generic over [`Probability`], so the same
//! routines run in `f64` or in exact rational arithmetic.

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod gateway;
pub mod harness;
pub mod scalar;
pub mod search;
pub mod verdicts;

pub use error::{Error, Result};
pub use scalar::Probability;

/// Floating-point probability used by the default pipeline.
pub type Prob = f64;

/// Exact probability, used for algebraic cross-checks.
pub type ExactProb = num_rational::BigRational;

/// Strategy grid point with `f64` success probability.
pub type StrategyPointF64 = estimator::StrategyPoint<Prob>;

/// Semantic self-consistency score with `f64` pass rate.
pub type SscScoreF64 = clustering::SscScore<Prob>;

// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::strategy::{Strategy, StrategyKind};
use super::tree::SearchNode;
use crate::corpus::{Implementation, Task};
use crate::error::{Error, Result};
use crate::gateway::{
    build_probe_prompt_capped, parse_probe_response, ChatRequest, DecodeParams, FeedbackMessage,
    LlmGateway, RequestKind, Transcript, TurnRecord,
};
use crate::harness::{Executor, Job, Limits, OutcomeReport};
use crate::verdicts::{classify, Counterexample, FilterVerdict};

/// What happens to a branch whose only findings were judged irrelevant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnSpurious {
    /// Keep expanding, reporting the findings as non-differentiating.
    #[default]
    Continue,
    /// End the branch at that node.
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: Strategy,
    /// Maximum probe-generation calls; `None` means the strategy's
    /// `max_calls`.
    pub budget: Option<u64>,
    pub filter_enabled: bool,
    pub on_spurious: OnSpurious,
    /// Record the complete tree instead of stopping at the first success.
    pub exhaustive: bool,
    pub probe_params: DecodeParams,
    pub judge_params: DecodeParams,
    pub limits: Limits,
    /// Newest turns kept in a prompt.
    pub max_prompt_turns: Option<usize>,
    /// Re-run a differentiating probe and require an identical report.
    pub confirm_differentiating: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: Strategy::default(),
            budget: None,
            filter_enabled: true,
            on_spurious: OnSpurious::Continue,
            exhaustive: false,
            probe_params: DecodeParams::new("gemini-2.0-flash", 0.7),
            judge_params: DecodeParams::new("gemini-2.0-flash", 0.0),
            limits: Limits::default(),
            max_prompt_turns: Some(8),
            confirm_differentiating: true,
        }
    }
}

impl SearchConfig {
    pub fn effective_budget(&self) -> Result<u64> {
        match self.budget {
            Some(b) => Ok(b),
            None => self.strategy.max_calls(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Disproved,
    Exhausted,
    BudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub status: SearchStatus,
    /// Findings that disprove equivalence; non-empty iff disproved.
    pub counterexamples: Vec<Counterexample>,
    /// Findings that did not count (judged irrelevant or unjudged).
    pub spurious: Vec<Counterexample>,
    pub tree: SearchNode,
    pub llm_calls_used: u64,
    pub judge_calls: u64,
    /// At least one probe ran with a type-valid input.
    pub runnable: bool,
    pub flaky: bool,
    pub degraded: bool,
    pub transcript_truncated: bool,
}

/// The model gateway and harness a search talks to.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub gateway: &'a LlmGateway,
    pub executor: &'a dyn Executor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Halt {
    Disproved,
    Budget,
    Flaky,
}

enum Next {
    Turn(TurnRecord),
    SameTranscript,
    Leaf,
}

struct Run<'a> {
    task: &'a Task,
    pair: [&'a Implementation; 2],
    cfg: &'a SearchConfig,
    ctx: SearchContext<'a>,
    scope: String,
    budget: u64,
    calls: u64,
    judge_calls: u64,
    found: Vec<Counterexample>,
    spurious: Vec<Counterexample>,
    halt: Option<Halt>,
    runnable: bool,
    flaky: bool,
    degraded: bool,
    truncated: bool,
}

/// Depth-first probe search over `impl_a` vs `impl_b`.
///
/// Children are visited in sample-index order. Every node that neither
/// succeeds nor sits at the maximum depth is expanded, so a search that never
/// succeeds spends exactly `max_calls` model calls.
pub fn run_search(
    task: &Task,
    impl_a: &Implementation,
    impl_b: &Implementation,
    config: &SearchConfig,
    ctx: SearchContext<'_>,
) -> Result<SearchResult> {
    config.limits.validate()?;
    let mut run = Run {
        task,
        pair: [impl_a, impl_b],
        cfg: config,
        ctx,
        scope: format!("{}|{}", impl_a.impl_id, impl_b.impl_id),
        budget: config.effective_budget()?,
        calls: 0,
        judge_calls: 0,
        found: Vec::new(),
        spurious: Vec::new(),
        halt: None,
        runnable: false,
        flaky: false,
        degraded: false,
        truncated: false,
    };
    let mut root = SearchNode::root();
    run.expand(&mut root, &Transcript::default(), &[])?;

    let status = if !run.found.is_empty() {
        SearchStatus::Disproved
    } else if run.halt == Some(Halt::Budget) {
        SearchStatus::BudgetExceeded
    } else {
        SearchStatus::Exhausted
    };
    Ok(SearchResult {
        status,
        counterexamples: run.found,
        spurious: run.spurious,
        tree: root,
        llm_calls_used: run.calls,
        judge_calls: run.judge_calls,
        runnable: run.runnable,
        flaky: run.flaky,
        degraded: run.degraded,
        transcript_truncated: run.truncated,
    })
}

/// Samples the complete tree with constant branching `k` to depth `d`,
/// truncated only below successful nodes.
pub fn record_full_tree(
    task: &Task,
    impl_a: &Implementation,
    impl_b: &Implementation,
    k: u32,
    d: u32,
    base: &SearchConfig,
    ctx: SearchContext<'_>,
) -> Result<SearchNode> {
    let strategy = Strategy::new(StrategyKind::Full, k, d)?;
    let needed = strategy.max_calls()?;
    if let Some(b) = base.budget {
        if b < needed {
            return Err(Error::contract(format!(
                "budget {b} below the {needed} nodes of a full K={k} D={d} tree"
            )));
        }
    }
    let config = SearchConfig {
        strategy,
        budget: Some(base.budget.unwrap_or(needed)),
        exhaustive: true,
        ..base.clone()
    };
    Ok(run_search(task, impl_a, impl_b, &config, ctx)?.tree)
}

/// Decoding sample index for a node. Siblings under a fresh prompt use their
/// position, so trees of different strategies share cached prefixes. Nodes
/// re-using an ancestor's prompt get a hashed index with the top bit set,
/// which cannot collide with positions.
fn sample_index(chain: &[u64], index: u64) -> u64 {
    if chain.is_empty() {
        return index;
    }
    let mut h = Sha256::new();
    for c in chain.iter().chain(std::iter::once(&index)) {
        h.update(c.to_le_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) | (1 << 63)
}

impl<'a> Run<'a> {
    /// `chain` holds the sample indices of the failed ancestors since the
    /// last turn that extended the transcript; those nodes share its prompt.
    fn expand(
        &mut self,
        parent: &mut SearchNode,
        transcript: &Transcript,
        chain: &[u64],
    ) -> Result<()> {
        let depth = parent.depth + 1;
        if depth > self.cfg.strategy.d {
            return Ok(());
        }
        let branching = self.cfg.strategy.branching_at(depth)?;
        for index in 0..branching {
            if self.halt.is_some() {
                return Ok(());
            }
            if self.calls >= self.budget {
                self.halt = Some(Halt::Budget);
                return Ok(());
            }
            let mut child = SearchNode::new(parent.child_id(index), depth);
            let next = self.visit(&mut child, transcript, chain, index, branching)?;
            if self.halt.is_none() && depth < self.cfg.strategy.d {
                match next {
                    Next::Turn(turn) => self.expand(&mut child, &transcript.extended(turn), &[])?,
                    Next::SameTranscript => {
                        let mut longer = chain.to_vec();
                        longer.push(index);
                        self.expand(&mut child, transcript, &longer)?
                    }
                    Next::Leaf => {}
                }
            }
            parent.children.push(child);
        }
        Ok(())
    }

    fn sample(&mut self, position: &str, prompt: &str, idx: u64) -> Result<Option<String>> {
        let params = self.cfg.probe_params.with_sample_index(idx);
        let request = ChatRequest {
            scope: &self.scope,
            kind: RequestKind::Probe {
                position: position.to_string(),
            },
            prompt,
            params: &params,
        };
        let remaining = u32::try_from(self.budget - self.calls).unwrap_or(u32::MAX);
        match self.ctx.gateway.sample(&request, Some(remaining)) {
            Ok(s) => {
                self.calls += u64::from(s.attempts.max(1));
                Ok(Some(s.text))
            }
            Err(Error::BudgetedCallFailure { attempts, message }) => {
                self.calls += u64::from(attempts.max(1));
                log::warn!("probe call at {position} failed: {message}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn visit(
        &mut self,
        node: &mut SearchNode,
        transcript: &Transcript,
        chain: &[u64],
        index: u64,
        branching: u64,
    ) -> Result<Next> {
        let target = &self.task.target_function;
        let (prompt, truncated) = build_probe_prompt_capped(
            self.task,
            &self.pair,
            transcript,
            self.cfg.max_prompt_turns,
        );
        self.truncated |= truncated;

        let Some(raw) = self.sample(&node.node_id, &prompt, sample_index(chain, index))? else {
            node.failure = Some("model call failed".to_string());
            return Ok(Next::SameTranscript);
        };
        let parsed = match parse_probe_response(&raw) {
            Ok(p) => Some(p),
            Err(Error::ParseFailure) if self.calls < self.budget => {
                // one re-sample, with an index outside the sibling range
                let retry = if chain.is_empty() {
                    index + branching
                } else {
                    sample_index(&[chain, &[index]].concat(), u64::MAX)
                };
                match self.sample(&node.node_id, &prompt, retry)? {
                    Some(raw) => parse_probe_response(&raw).ok(),
                    None => None,
                }
            }
            Err(Error::ParseFailure) => None,
            Err(e) => return Err(e),
        };
        let Some(probe) = parsed else {
            node.failure = Some("no probe in model response".to_string());
            return Ok(Next::SameTranscript);
        };
        node.probe_source = probe.source.clone();
        node.rationale = probe.rationale;

        let job = Job {
            target_function: target.clone(),
            implementations: self.pair.iter().map(|i| i.source.clone()).collect(),
            probe_source: probe.source.clone(),
            limits: self.cfg.limits.clone(),
        };
        let report = match self.execute(&job) {
            Ok(r) => r,
            Err(e) => {
                node.failure = Some(e.to_string());
                return Ok(Next::Turn(TurnRecord {
                    probe_source: probe.source,
                    feedback: FeedbackMessage::execution_error(target, e.to_string()),
                }));
            }
        };
        node.outcome_digest = Some(report.digest());
        self.runnable |= report.has_valid_input();

        let mut disproofs = Vec::new();
        let mut spurious_inputs = HashSet::new();
        for inp in report.differentiating_inputs() {
            let outs = inp.output_displays();
            let mut cx = Counterexample {
                task_id: self.task.task_id.clone(),
                impl_pair: (self.pair[0].impl_id.clone(), self.pair[1].impl_id.clone()),
                probe_source: probe.source.clone(),
                input_repr: inp.input_repr.clone(),
                outputs_repr: (
                    outs.first().cloned().unwrap_or_default(),
                    outs.get(1).cloned().unwrap_or_default(),
                ),
                filter_verdict: FilterVerdict::Unfiltered,
                rationale: String::new(),
            };
            if self.cfg.filter_enabled {
                let c = classify(
                    &cx,
                    self.task,
                    self.ctx.gateway,
                    &self.cfg.judge_params,
                    &self.scope,
                )?;
                self.judge_calls += u64::from(c.calls);
                self.degraded |= c.degraded;
                cx.filter_verdict = c.verdict;
                cx.rationale = c.rationale;
            }
            if cx.is_disproof(self.cfg.filter_enabled) {
                disproofs.push(cx.clone());
            } else {
                spurious_inputs.insert(cx.input_repr.clone());
                self.spurious.push(cx.clone());
            }
            node.findings.push(cx);
        }

        if !disproofs.is_empty() {
            if self.cfg.confirm_differentiating {
                let again = self.execute(&job);
                if again.as_ref().ok() != Some(&report) {
                    log::warn!("probe at {} is not reproducible", node.node_id);
                    node.failure = Some("outcomes changed on re-run".to_string());
                    self.flaky = true;
                    self.halt = Some(Halt::Flaky);
                    node.report = Some(report);
                    return Ok(Next::Leaf);
                }
            }
            node.success = true;
            self.found.extend(disproofs);
            if !self.cfg.exhaustive {
                self.halt = Some(Halt::Disproved);
            }
            node.report = Some(report);
            return Ok(Next::Leaf);
        }

        let feedback = FeedbackMessage::from_report(target, &report, &spurious_inputs);
        node.report = Some(report);
        if !spurious_inputs.is_empty() && self.cfg.on_spurious == OnSpurious::Stop {
            return Ok(Next::Leaf);
        }
        Ok(Next::Turn(TurnRecord {
            probe_source: probe.source,
            feedback,
        }))
    }

    fn execute(&self, job: &Job) -> Result<OutcomeReport> {
        let report = self.ctx.executor.execute(job)?;
        report.validate(job.implementations.len())?;
        Ok(report)
    }
}

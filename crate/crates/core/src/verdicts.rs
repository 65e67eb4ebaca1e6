// SPDX-License-Identifier: Apache-2.0

//! Counterexamples, the spurious-difference filter, probe bundles and the
//! per-pair verdict report.

use serde::{Deserialize, Serialize};

use crate::corpus::{Implementation, Task};
use crate::error::{Error, Result};
use crate::gateway::{
    build_filter_prompt, parse_filter_response, ChatRequest, DecodeParams, JudgeVerdict,
    LlmGateway, RequestKind,
};
use crate::harness::{CanonicalValue, Executor, Job, Limits, OutcomeReport};
use crate::search::{SearchResult, SearchStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVerdict {
    Important,
    Irrelevant,
    Unfiltered,
}

impl From<JudgeVerdict> for FilterVerdict {
    fn from(v: JudgeVerdict) -> Self {
        match v {
            JudgeVerdict::Important => FilterVerdict::Important,
            JudgeVerdict::Irrelevant => FilterVerdict::Irrelevant,
        }
    }
}

/// An input on which two implementations produced unequal outcomes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub task_id: String,
    pub impl_pair: (String, String),
    pub probe_source: String,
    pub input_repr: String,
    pub outputs_repr: (String, String),
    pub filter_verdict: FilterVerdict,
    #[serde(default)]
    pub rationale: String,
}

impl Counterexample {
    /// Whether this finding disproves equivalence. With the filter on only
    /// judged-important findings count.
    pub fn is_disproof(&self, filter_enabled: bool) -> bool {
        if filter_enabled {
            self.filter_verdict == FilterVerdict::Important
        } else {
            true
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub verdict: FilterVerdict,
    pub rationale: String,
    /// Judge calls spent, including the parse-failure retry.
    pub calls: u32,
    /// The judge could not be reached; the finding stays unfiltered.
    pub degraded: bool,
}

const UNPARSEABLE_RATIONALE: &str = "judge response unparseable";

/// Asks the judge whether the difference matters for the task.
///
/// One retry on an unparseable answer, after which the finding is treated as
/// irrelevant. Transport exhaustion leaves it unfiltered and degraded.
pub fn classify(
    counterexample: &Counterexample,
    task: &Task,
    gateway: &LlmGateway,
    judge_params: &DecodeParams,
    scope: &str,
) -> Result<Classification> {
    let prompt = build_filter_prompt(
        &task.description,
        &counterexample.input_repr,
        &counterexample.outputs_repr.0,
        &counterexample.outputs_repr.1,
    )?;
    let mut calls = 0;
    for attempt in 0..2u64 {
        let params = judge_params.with_sample_index(judge_params.sample_index + attempt);
        let request = ChatRequest {
            scope,
            kind: RequestKind::Judge {
                input_repr: counterexample.input_repr.clone(),
            },
            prompt: &prompt,
            params: &params,
        };
        let sampled = match gateway.sample(&request, None) {
            Ok(s) => s,
            Err(Error::BudgetedCallFailure { attempts, message }) => {
                log::warn!("judge unavailable after {attempts} attempt(s): {message}");
                return Ok(Classification {
                    verdict: FilterVerdict::Unfiltered,
                    rationale: String::new(),
                    calls: calls + attempts,
                    degraded: true,
                });
            }
            Err(e) => return Err(e),
        };
        calls += sampled.attempts.max(1);
        match parse_filter_response(&sampled.text) {
            Ok(decision) => {
                return Ok(Classification {
                    verdict: decision.verdict.into(),
                    rationale: decision.rationale,
                    calls,
                    degraded: false,
                })
            }
            Err(e) => log::debug!("judge attempt {attempt}: {e}"),
        }
    }
    Ok(Classification {
        verdict: FilterVerdict::Irrelevant,
        rationale: UNPARSEABLE_RATIONALE.to_string(),
        calls,
        degraded: false,
    })
}

/// Several probes evaluated together; the outcome is the tuple of member
/// outcomes, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeBundle {
    pub probes: Vec<String>,
}

pub fn bundle(probes: Vec<String>) -> Result<ProbeBundle> {
    if probes.is_empty() {
        return Err(Error::contract("a probe bundle needs at least one probe"));
    }
    Ok(ProbeBundle { probes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedInput {
    pub input_repr: String,
    pub valid: bool,
    pub outcome: Option<CanonicalValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum BundleElement {
    Evaluated { inputs: Vec<EvaluatedInput> },
    Failed { reason: String },
}

fn probe_job(probe: &str, target: &str, sources: Vec<String>, limits: &Limits) -> Job {
    Job {
        target_function: target.to_string(),
        implementations: sources,
        probe_source: probe.to_string(),
        limits: limits.clone(),
    }
}

/// Runs every member probe on one implementation. A failing member becomes
/// a `Failed` element; the others still run.
pub fn evaluate_bundle(
    bundle: &ProbeBundle,
    target_function: &str,
    implementation: &Implementation,
    executor: &dyn Executor,
    limits: &Limits,
) -> Vec<BundleElement> {
    bundle
        .probes
        .iter()
        .map(|probe| {
            let job = probe_job(
                probe,
                target_function,
                vec![implementation.source.clone()],
                limits,
            );
            match executor.execute(&job) {
                Ok(OutcomeReport {
                    probe_error: Some(err),
                    ..
                }) => BundleElement::Failed { reason: err },
                Ok(report) => BundleElement::Evaluated {
                    inputs: report
                        .per_input
                        .into_iter()
                        .map(|i| EvaluatedInput {
                            input_repr: i.input_repr,
                            valid: i.valid,
                            outcome: i.outcomes.into_iter().next(),
                        })
                        .collect(),
                },
                Err(e) => BundleElement::Failed {
                    reason: e.to_string(),
                },
            }
        })
        .collect()
}

/// First member probe (index and input) on which `a` and `b` differ.
pub fn bundle_distinguishes(
    bundle: &ProbeBundle,
    target_function: &str,
    a: &Implementation,
    b: &Implementation,
    executor: &dyn Executor,
    limits: &Limits,
) -> Result<Option<(usize, String)>> {
    for (idx, probe) in bundle.probes.iter().enumerate() {
        let job = probe_job(
            probe,
            target_function,
            vec![a.source.clone(), b.source.clone()],
            limits,
        );
        let report = match executor.execute(&job) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("bundle member {idx} failed: {e}");
                continue;
            }
        };
        let first = report.differentiating_inputs().next().map(|i| i.input_repr.clone());
        if let Some(input) = first {
            return Ok(Some((idx, input)));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Disproved,
    NotDisproved,
    NotRunnable,
}

/// Verdict for one implementation pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairReport {
    pub task_id: String,
    pub impl_a: String,
    pub impl_b: String,
    pub status: PairStatus,
    /// Findings that disprove equivalence.
    pub counterexamples: Vec<Counterexample>,
    /// Findings judged irrelevant (or left unjudged when the judge failed).
    pub spurious: Vec<Counterexample>,
    pub search_status: Option<SearchStatus>,
    pub llm_calls_used: u64,
    pub judge_calls: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PairReport {
    pub fn from_search(task_id: &str, a: &str, b: &str, result: &SearchResult) -> Self {
        let mut notes = Vec::new();
        if result.flaky {
            notes.push("outcomes changed when the probe was re-run".to_string());
        }
        if result.degraded {
            notes.push("judge unavailable for some findings".to_string());
        }
        if result.transcript_truncated {
            notes.push("older turns were dropped from prompts".to_string());
        }
        let status = if result.flaky || !result.runnable {
            PairStatus::NotRunnable
        } else if result.status == SearchStatus::Disproved {
            PairStatus::Disproved
        } else {
            PairStatus::NotDisproved
        };
        PairReport {
            task_id: task_id.to_string(),
            impl_a: a.to_string(),
            impl_b: b.to_string(),
            status,
            counterexamples: if status == PairStatus::Disproved {
                result.counterexamples.clone()
            } else {
                Vec::new()
            },
            spurious: result.spurious.clone(),
            search_status: Some(result.status),
            llm_calls_used: result.llm_calls_used,
            judge_calls: result.judge_calls,
            notes,
        }
    }

    pub fn not_runnable(task_id: &str, a: &str, b: &str, reason: impl Into<String>) -> Self {
        PairReport {
            task_id: task_id.to_string(),
            impl_a: a.to_string(),
            impl_b: b.to_string(),
            status: PairStatus::NotRunnable,
            counterexamples: Vec::new(),
            spurious: Vec::new(),
            search_status: None,
            llm_calls_used: 0,
            judge_calls: 0,
            notes: vec![reason.into()],
        }
    }

    /// Verdict the same transcript yields with the filter disabled: any raw
    /// finding disproves.
    pub fn disproved_without_filter(&self) -> bool {
        self.status != PairStatus::NotRunnable
            && (!self.counterexamples.is_empty() || !self.spurious.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::Origin;
    use crate::gateway::{ChatProvider, ProviderError, RetryPolicy, ScriptedProvider};
    use crate::harness::{FnExecutor, InputOutcome};

    fn task() -> Task {
        Task {
            task_id: "fig1".into(),
            description: "Return the indices of the two numbers that add up to target.".into(),
            target_function: "two_sum".into(),
            signature_text: String::new(),
            ground_truth: None,
            unit_tests: None,
            language_tag: "python".into(),
        }
    }

    fn cx(input: &str, a: &str, b: &str) -> Counterexample {
        Counterexample {
            task_id: "fig1".into(),
            impl_pair: ("a".into(), "b".into()),
            probe_source: "def create_fn_inputs(): ...".into(),
            input_repr: input.into(),
            outputs_repr: (a.into(), b.into()),
            filter_verdict: FilterVerdict::Unfiltered,
            rationale: String::new(),
        }
    }

    fn gateway(p: ScriptedProvider) -> LlmGateway {
        LlmGateway::new(Arc::new(p)).with_retry(RetryPolicy::no_delay(3))
    }

    #[test]
    fn order_difference_judged_irrelevant() {
        let gw = gateway(ScriptedProvider::default().judge(
            "[1, 2, 3, 4, 5], 9",
            "Order of indices is unspecified.\nRATIONALE: order unspecified\nDIFFERENCES: IRRELEVANT",
        ));
        let c = classify(
            &cx("[1, 2, 3, 4, 5], 9", "[3, 4]", "[4, 3]"),
            &task(),
            &gw,
            &DecodeParams::new("judge", 0.0),
            "",
        )
        .unwrap();
        assert_eq!(c.verdict, FilterVerdict::Irrelevant);
        assert_eq!(c.rationale, "order unspecified");
        assert_eq!(c.calls, 1);
    }

    #[test]
    fn precondition_violation_judged_irrelevant() {
        let gw = gateway(ScriptedProvider::default().judge_fallback(
            "RATIONALE: precondition violation\nDIFFERENCES: IRRELEVANT",
        ));
        let c = classify(
            &cx("-5", "ValueError('negative')", "False"),
            &task(),
            &gw,
            &DecodeParams::new("judge", 0.0),
            "",
        )
        .unwrap();
        assert_eq!(c.verdict, FilterVerdict::Irrelevant);
        assert_eq!(c.rationale, "precondition violation");
    }

    #[test]
    fn important_verdict() {
        let gw = gateway(ScriptedProvider::default().judge_fallback("DIFFERENCES: IMPORTANT"));
        let c = classify(&cx("1", "3", "1"), &task(), &gw, &DecodeParams::new("j", 0.0), "").unwrap();
        assert_eq!(c.verdict, FilterVerdict::Important);
    }

    struct Seq(std::sync::Mutex<Vec<std::result::Result<String, ProviderError>>>);
    impl ChatProvider for Seq {
        fn complete(&self, _: &ChatRequest<'_>) -> std::result::Result<String, ProviderError> {
            self.0.lock().unwrap().remove(0)
        }
    }

    #[test]
    fn unparseable_twice_defaults_to_irrelevant() {
        let gw = LlmGateway::new(Arc::new(Seq(std::sync::Mutex::new(vec![
            Ok("no idea".into()),
            Ok("still no idea".into()),
        ]))));
        let c = classify(&cx("1", "3", "1"), &task(), &gw, &DecodeParams::new("j", 0.0), "").unwrap();
        assert_eq!(c.verdict, FilterVerdict::Irrelevant);
        assert_eq!(c.calls, 2);
    }

    #[test]
    fn unparseable_then_parseable_uses_retry() {
        let gw = LlmGateway::new(Arc::new(Seq(std::sync::Mutex::new(vec![
            Ok("hmm".into()),
            Ok("DIFFERENCES: IMPORTANT".into()),
        ]))));
        let c = classify(&cx("1", "3", "1"), &task(), &gw, &DecodeParams::new("j", 0.0), "").unwrap();
        assert_eq!(c.verdict, FilterVerdict::Important);
        assert_eq!(c.calls, 2);
    }

    #[test]
    fn transport_exhaustion_is_degraded_unfiltered() {
        let gw = LlmGateway::new(Arc::new(Seq(std::sync::Mutex::new(vec![
            Err(ProviderError::Transient("503".into())),
            Err(ProviderError::Transient("503".into())),
            Err(ProviderError::Transient("503".into())),
        ]))))
        .with_retry(RetryPolicy::no_delay(3));
        let c = classify(&cx("1", "3", "1"), &task(), &gw, &DecodeParams::new("j", 0.0), "").unwrap();
        assert_eq!(c.verdict, FilterVerdict::Unfiltered);
        assert!(c.degraded);
        assert!(!cx("1", "3", "1").is_disproof(true));
        assert!(cx("1", "3", "1").is_disproof(false));
    }

    fn imp(id: &str, src: &str) -> Implementation {
        Implementation {
            impl_id: id.into(),
            task_id: "t".into(),
            source: src.into(),
            origin: Origin::Sampled,
            passes_unit_tests: None,
        }
    }

    /// Each "implementation" is a constant; each probe yields one input and
    /// the outcome is the constant plus the probe's digit.
    fn constant_executor() -> impl Executor {
        FnExecutor(|job: &Job| {
            if job.probe_source.contains("boom") {
                return Err(Error::Harness("crashed".into()));
            }
            let offset: i64 = job.probe_source.trim().parse().unwrap_or(0);
            let outs = job
                .implementations
                .iter()
                .map(|s| {
                    let base: i64 = s.parse().unwrap();
                    CanonicalValue::int(if offset == 0 { 0 } else { base + offset })
                })
                .collect();
            Ok(OutcomeReport::from_inputs(vec![InputOutcome::from_outcomes(
                offset.to_string(),
                outs,
            )]))
        })
    }

    #[test]
    fn bundle_of_one_matches_standalone() {
        let exec = constant_executor();
        let b = bundle(vec!["1".into()]).unwrap();
        let f = imp("f", "10");
        let elems = evaluate_bundle(&b, "f", &f, &exec, &Limits::default());
        assert_eq!(elems.len(), 1);
        let standalone = exec
            .execute(&probe_job("1", "f", vec!["10".into()], &Limits::default()))
            .unwrap();
        match &elems[0] {
            BundleElement::Evaluated { inputs } => {
                assert_eq!(inputs[0].outcome.as_ref(), standalone.per_input[0].outcomes.first())
            }
            other => panic!("{other:?}"),
        }
        assert!(bundle(vec![]).is_err());
    }

    #[test]
    fn failing_member_does_not_abort_siblings() {
        let exec = constant_executor();
        let b = bundle(vec!["1".into(), "boom".into(), "2".into()]).unwrap();
        let elems = evaluate_bundle(&b, "f", &imp("f", "10"), &exec, &Limits::default());
        assert_eq!(elems.len(), 3);
        assert!(matches!(elems[1], BundleElement::Failed { .. }));
        assert!(matches!(elems[2], BundleElement::Evaluated { .. }));
    }

    #[test]
    fn bundle_reflexive_and_componentwise() {
        let exec = constant_executor();
        let b = bundle(vec!["0".into(), "1".into(), "2".into()]).unwrap();
        let gt = imp("gt", "10");
        let same = evaluate_bundle(&b, "f", &gt, &exec, &Limits::default());
        assert_eq!(same, evaluate_bundle(&b, "f", &gt, &exec, &Limits::default()));
        assert_eq!(
            bundle_distinguishes(&b, "f", &gt, &gt, &exec, &Limits::default()).unwrap(),
            None
        );

        let third = imp("third", "11");
        let found = bundle_distinguishes(&b, "f", &gt, &third, &exec, &Limits::default()).unwrap();
        // oracle: run each member alone on the pair
        let separately = b.probes.iter().position(|p| {
            exec.execute(&probe_job(p, "f", vec!["10".into(), "11".into()], &Limits::default()))
                .unwrap()
                .any_differentiating
        });
        assert_eq!(found.as_ref().map(|(i, _)| *i), separately);
        assert_eq!(found.map(|(i, _)| i), Some(1));
    }
}

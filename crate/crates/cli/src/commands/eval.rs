// SPDX-License-Identifier: Apache-2.0

use chrono::Utc;
use probegen::corpus::{Implementation, TaskEntry};
use probegen::verdicts::{PairReport, PairStatus};
use rayon::prelude::*;
use serde::Serialize;

use super::{candidates, config, load_corpus, search_pair};
use crate::args::EvalArgs;
use crate::error::CliResult;
use crate::output::emit;
use crate::EXIT_OK;

/// Counts (and shares) of the four verdict combinations. A method "passes"
/// a sample when it considers it correct.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Cells<T> {
    pub pass_pass: T,
    pub pass_fail: T,
    pub fail_pass: T,
    pub fail_fail: T,
}

/// Agreement between two methods over the samples both could run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementTable {
    pub left: String,
    pub right: String,
    pub samples: usize,
    pub mutually_runnable: usize,
    pub pct_mutually_runnable: f64,
    pub counts: Cells<usize>,
    /// Percent of the mutually runnable samples.
    pub percent: Cells<f64>,
}

/// Tallies per-sample verdicts; `None` marks a method that could not run
/// the sample.
pub fn agreement(left: &str, right: &str, verdicts: &[(Option<bool>, Option<bool>)]) -> AgreementTable {
    let mut counts = Cells::<usize>::default();
    for v in verdicts {
        match *v {
            (Some(true), Some(true)) => counts.pass_pass += 1,
            (Some(true), Some(false)) => counts.pass_fail += 1,
            (Some(false), Some(true)) => counts.fail_pass += 1,
            (Some(false), Some(false)) => counts.fail_fail += 1,
            _ => {}
        }
    }
    let runnable = counts.pass_pass + counts.pass_fail + counts.fail_pass + counts.fail_fail;
    let pct = |n: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * n as f64 / of as f64 };
    AgreementTable {
        left: left.to_string(),
        right: right.to_string(),
        samples: verdicts.len(),
        mutually_runnable: runnable,
        pct_mutually_runnable: pct(runnable, verdicts.len()),
        percent: Cells {
            pass_pass: pct(counts.pass_pass, runnable),
            pass_fail: pct(counts.pass_fail, runnable),
            fail_pass: pct(counts.fail_pass, runnable),
            fail_fail: pct(counts.fail_fail, runnable),
        },
        counts,
    }
}

#[derive(Serialize)]
struct Skipped {
    task_id: String,
    reason: String,
}

#[derive(Serialize)]
struct Sample {
    impl_id: String,
    passes_unit_tests: Option<bool>,
    report: PairReport,
}

#[derive(Serialize)]
struct Body {
    tasks_evaluated: usize,
    skipped: Vec<Skipped>,
    samples: Vec<Sample>,
    agreement: Vec<AgreementTable>,
}

/// ProbeGen's verdict on a sample: passes when nothing was disproved.
fn probe_verdict(r: &PairReport, filtered: bool) -> Option<bool> {
    if r.status == PairStatus::NotRunnable {
        return None;
    }
    Some(if filtered {
        r.status != PairStatus::Disproved
    } else {
        !r.disproved_without_filter()
    })
}

pub fn run(args: &EvalArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    let corpus = load_corpus(&args.dataset)?;
    let rt = cfg.runtime()?;

    let mut skipped = Vec::new();
    let mut jobs: Vec<(&TaskEntry, Implementation, Implementation)> = Vec::new();
    let mut evaluated = 0;
    for entry in &corpus.entries {
        let Some(gt) = entry.ground_truth_impl() else {
            log::warn!("task {} has no ground truth; skipped", entry.task.task_id);
            skipped.push(Skipped {
                task_id: entry.task.task_id.clone(),
                reason: "no ground truth".to_string(),
            });
            continue;
        };
        evaluated += 1;
        for cand in candidates(entry) {
            jobs.push((entry, gt.clone(), cand));
        }
    }

    let reports = rt.pool.install(|| {
        jobs.par_iter()
            .map(|(entry, gt, cand)| search_pair(&rt, &entry.task, gt, cand))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let samples: Vec<Sample> = jobs
        .iter()
        .zip(reports)
        .map(|((_, _, cand), report)| Sample {
            impl_id: cand.impl_id.clone(),
            passes_unit_tests: cand.passes_unit_tests,
            report,
        })
        .collect();

    let unit: Vec<Option<bool>> = samples.iter().map(|s| s.passes_unit_tests).collect();
    let filtered: Vec<Option<bool>> = samples.iter().map(|s| probe_verdict(&s.report, true)).collect();
    let unfiltered: Vec<Option<bool>> =
        samples.iter().map(|s| probe_verdict(&s.report, false)).collect();
    let zip = |a: &[Option<bool>], b: &[Option<bool>]| -> Vec<_> {
        a.iter().copied().zip(b.iter().copied()).collect()
    };
    let tables = vec![
        agreement("unit_tests", "probegen", &zip(&unit, &filtered)),
        agreement("unit_tests", "probegen_no_filter", &zip(&unit, &unfiltered)),
        agreement("probegen", "probegen_no_filter", &zip(&filtered, &unfiltered)),
    ];
    for t in &tables {
        println!(
            "{} vs {}: (pass,pass) {:.1}%  (pass,fail) {:.1}%  (fail,pass) {:.1}%  (fail,fail) {:.1}%  mutually runnable {:.1}% ({}/{})",
            t.left,
            t.right,
            t.percent.pass_pass,
            t.percent.pass_fail,
            t.percent.fail_pass,
            t.percent.fail_fail,
            t.pct_mutually_runnable,
            t.mutually_runnable,
            t.samples
        );
    }
    emit(
        "eval-dataset",
        &cfg,
        &Body {
            tasks_evaluated: evaluated,
            skipped,
            samples,
            agreement: tables,
        },
        started,
    )?;
    Ok(EXIT_OK)
}

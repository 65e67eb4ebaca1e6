// SPDX-License-Identifier: Apache-2.0

mod cluster;
mod disprove;
mod eval;
mod tune;

use std::collections::BTreeSet;
use std::path::Path;

use probegen::corpus::{load_dataset, Corpus, DatasetFormat, Implementation, Origin, Task, TaskEntry};
use probegen::search::run_search;
use probegen::verdicts::{PairReport, PairStatus};

use crate::args::Command;
use crate::config::{RunConfig, Runtime};
use crate::error::{CliError, CliResult};

/// Runs a subcommand and returns its exit code.
pub fn run(command: Command) -> CliResult<i32> {
    match command {
        Command::Disprove(a) => disprove::run(&a),
        Command::EvalDataset(a) => eval::run(&a),
        Command::RecordTrees(a) => tune::record(&a),
        Command::TuneStrategy(a) => tune::run(&a),
        Command::Cluster(a) => cluster::run(&a),
        Command::Ssc(a) => cluster::ssc(&a),
    }
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let corpus = load_dataset(path, DatasetFormat::Jsonl)?;
    for r in &corpus.rejects {
        log::warn!("{}:{}: skipped record: {}", path.display(), r.line, r.reason);
    }
    Ok(corpus)
}

fn select_task<'c>(corpus: &'c Corpus, id: Option<&str>) -> CliResult<&'c TaskEntry> {
    match id {
        Some(id) => corpus
            .task(id)
            .ok_or_else(|| CliError::Usage(format!("no task `{id}` in the corpus"))),
        None if corpus.entries.len() == 1 => Ok(&corpus.entries[0]),
        None => Err(CliError::Usage(format!(
            "the corpus holds {} tasks; pick one with --task",
            corpus.entries.len()
        ))),
    }
}

/// Resolves ids against a task; `ground_truth` falls back to the reference
/// solution.
fn select_impls(entry: &TaskEntry, ids: &[String]) -> CliResult<Vec<Implementation>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(CliError::Usage(format!("implementation `{id}` selected twice")));
        }
        let found = entry.implementation(id).cloned().or_else(|| {
            entry
                .ground_truth_impl()
                .filter(|g| g.impl_id == *id)
        });
        out.push(found.ok_or_else(|| {
            CliError::Usage(format!(
                "task `{}` has no implementation `{id}`",
                entry.task.task_id
            ))
        })?);
    }
    Ok(out)
}

/// Implementations other than the ground truth.
fn candidates(entry: &TaskEntry) -> Vec<Implementation> {
    let gt_id = entry.ground_truth_impl().map(|g| g.impl_id);
    entry
        .implementations
        .iter()
        .filter(|i| i.origin != Origin::GroundTruth && Some(&i.impl_id) != gt_id.as_ref())
        .cloned()
        .collect()
}

/// Searches one pair. Byte-identical sources are equivalent by construction
/// and skip the search.
fn search_pair(
    rt: &Runtime,
    task: &Task,
    a: &Implementation,
    b: &Implementation,
) -> CliResult<PairReport> {
    if a.source == b.source {
        return Ok(PairReport {
            task_id: task.task_id.clone(),
            impl_a: a.impl_id.clone(),
            impl_b: b.impl_id.clone(),
            status: PairStatus::NotDisproved,
            counterexamples: Vec::new(),
            spurious: Vec::new(),
            search_status: None,
            llm_calls_used: 0,
            judge_calls: 0,
            notes: vec!["identical sources; search skipped".to_string()],
        });
    }
    let result = run_search(task, a, b, &rt.search, rt.ctx())?;
    Ok(PairReport::from_search(&task.task_id, &a.impl_id, &b.impl_id, &result))
}

fn status_name(s: PairStatus) -> &'static str {
    match s {
        PairStatus::Disproved => "disproved",
        PairStatus::NotDisproved => "not_disproved",
        PairStatus::NotRunnable => "not_runnable",
    }
}

fn print_pair(r: &PairReport) {
    let detail = r
        .counterexamples
        .first()
        .map(|c| format!(" on {}: {} vs {}", c.input_repr, c.outputs_repr.0, c.outputs_repr.1))
        .unwrap_or_default();
    println!(
        "{} {} vs {}: {}{detail}",
        r.task_id,
        r.impl_a,
        r.impl_b,
        status_name(r.status)
    );
}

fn config(run: &crate::args::RunArgs) -> CliResult<RunConfig> {
    RunConfig::from_args(run)
}

// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fs;

use chrono::Utc;
use probegen::clustering::{run_clustering, ssc_pass1, Partition, PipelineOracle, TieMode};
use probegen::corpus::{Implementation, TaskEntry};
use probegen::verdicts::PairReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{candidates, config, load_corpus, select_impls, select_task};
use crate::args::{ClusterArgs, SscArgs};
use crate::config::Runtime;
use crate::error::{CliError, CliResult};
use crate::output::emit;
use crate::EXIT_OK;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskPartition {
    pub task_id: String,
    pub partition: Partition,
    #[serde(default)]
    pub searches: Vec<PairReport>,
}

#[derive(Serialize)]
struct ClusterBody<'a> {
    np: usize,
    tasks: &'a [TaskPartition],
}

/// Shape of a `cluster` report, as read back by `ssc`.
#[derive(Deserialize)]
struct ClusterReport {
    tasks: Vec<TaskPartition>,
}

fn cluster_task(
    rt: &Runtime,
    entry: &TaskEntry,
    impls: &[Implementation],
    np: usize,
    seed: u64,
) -> CliResult<TaskPartition> {
    let ids: Vec<String> = impls.iter().map(|i| i.impl_id.clone()).collect();
    if ids.len() < 2 || np == 0 {
        return Ok(TaskPartition {
            task_id: entry.task.task_id.clone(),
            partition: Partition::single(&ids),
            searches: Vec::new(),
        });
    }
    let mut oracle = PipelineOracle::new(&entry.task, impls, &rt.search, rt.ctx());
    let partition = run_clustering(&ids, np, &mut oracle, seed)?;
    Ok(TaskPartition {
        task_id: entry.task.task_id.clone(),
        partition,
        searches: oracle.reports,
    })
}

fn cluster_all(
    rt: &Runtime,
    selection: &[(&TaskEntry, Vec<Implementation>)],
    np: usize,
    seed: u64,
) -> CliResult<Vec<TaskPartition>> {
    rt.pool.install(|| {
        selection
            .par_iter()
            .map(|(entry, impls)| cluster_task(rt, entry, impls, np, seed))
            .collect()
    })
}

pub fn run(args: &ClusterArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    let corpus = load_corpus(&args.dataset)?;
    let selection: Vec<(&TaskEntry, Vec<Implementation>)> = match &args.task {
        Some(_) => {
            let entry = select_task(&corpus, args.task.as_deref())?;
            let impls = if args.impls.is_empty() {
                candidates(entry)
            } else {
                select_impls(entry, &args.impls)?
            };
            vec![(entry, impls)]
        }
        None if !args.impls.is_empty() => {
            let entry = select_task(&corpus, None)?;
            vec![(entry, select_impls(entry, &args.impls)?)]
        }
        None => corpus.entries.iter().map(|e| (e, candidates(e))).collect(),
    };
    let rt = cfg.runtime()?;
    let tasks = cluster_all(&rt, &selection, args.np, cfg.seed)?;
    for t in &tasks {
        let sizes: Vec<String> = t.partition.clusters.iter().map(|c| c.len().to_string()).collect();
        println!(
            "{}: {} clusters [{}] after {} searches",
            t.task_id,
            t.partition.clusters.len(),
            sizes.join(", "),
            t.searches.len()
        );
    }
    emit("cluster", &cfg, &ClusterBody { np: args.np, tasks: &tasks }, started)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SscRow {
    task_id: String,
    implementations: usize,
    clusters: usize,
    pass_at_1: f64,
    /// Expected pass rate of one uniformly drawn implementation.
    random_pass_at_1: f64,
    winning_clusters: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct Skipped {
    task_id: String,
    reason: String,
}

#[derive(Serialize)]
struct SscBody {
    tie_mode: TieMode,
    tasks: Vec<SscRow>,
    skipped: Vec<Skipped>,
    mean_pass_at_1: Option<f64>,
    mean_random_pass_at_1: Option<f64>,
}

pub fn ssc(args: &SscArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    let corpus = load_corpus(&args.dataset)?;
    let partitions = match &args.partition {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Fatal(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<ClusterReport>(&text)?.tasks
        }
        None => {
            let selection: Vec<_> = corpus.entries.iter().map(|e| (e, candidates(e))).collect();
            let rt = cfg.runtime()?;
            cluster_all(&rt, &selection, args.np, cfg.seed)?
        }
    };
    let mode = TieMode::from(args.tie_mode);

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for tp in &partitions {
        let Some(entry) = corpus.task(&tp.task_id) else {
            skipped.push(Skipped {
                task_id: tp.task_id.clone(),
                reason: "task not in the corpus".to_string(),
            });
            continue;
        };
        let flags: HashMap<String, bool> = entry
            .implementations
            .iter()
            .filter_map(|i| i.passes_unit_tests.map(|f| (i.impl_id.clone(), f)))
            .collect();
        let members: Vec<&String> = tp.partition.clusters.iter().flatten().collect();
        if members.is_empty() {
            skipped.push(Skipped {
                task_id: tp.task_id.clone(),
                reason: "no implementations".to_string(),
            });
            continue;
        }
        if let Some(m) = members.iter().find(|m| !flags.contains_key(m.as_str())) {
            skipped.push(Skipped {
                task_id: tp.task_id.clone(),
                reason: format!("no pass flag for `{m}`"),
            });
            continue;
        }
        let score = ssc_pass1::<f64>(&tp.partition, &flags, mode)?;
        let passing = members.iter().filter(|m| flags[m.as_str()]).count();
        rows.push(SscRow {
            task_id: tp.task_id.clone(),
            implementations: members.len(),
            clusters: tp.partition.clusters.len(),
            pass_at_1: score.pass_at_1,
            random_pass_at_1: passing as f64 / members.len() as f64,
            winning_clusters: score.winning_clusters,
        });
    }
    for s in &skipped {
        log::warn!("task {} skipped: {}", s.task_id, s.reason);
    }
    let mean = |f: fn(&SscRow) -> f64| {
        (!rows.is_empty()).then(|| rows.iter().map(f).sum::<f64>() / rows.len() as f64)
    };
    let body = SscBody {
        tie_mode: mode,
        mean_pass_at_1: mean(|r| r.pass_at_1),
        mean_random_pass_at_1: mean(|r| r.random_pass_at_1),
        tasks: rows,
        skipped,
    };
    for r in &body.tasks {
        println!(
            "{}: pass@1 {:.3} (random {:.3}), {} clusters",
            r.task_id, r.pass_at_1, r.random_pass_at_1, r.clusters
        );
    }
    if let (Some(m), Some(b)) = (body.mean_pass_at_1, body.mean_random_pass_at_1) {
        println!("mean: pass@1 {m:.3} (random {b:.3})");
    }
    emit("ssc", &cfg, &body, started)?;
    Ok(EXIT_OK)
}

// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;

use chrono::Utc;
use probegen::estimator::{evaluate_strategy, grid_rows, pareto_front, RecordedTree};
use probegen::search::{record_full_tree, Strategy, StrategyKind};
use probegen::StrategyPointF64;
use rayon::prelude::*;
use serde::Serialize;

use super::{candidates, config, load_corpus};
use crate::args::{parse_range, RecordArgs, TuneArgs};
use crate::error::{CliError, CliResult};
use crate::output::{emit, ensure_dir, file_stem, write_json};
use crate::EXIT_OK;

pub const GRID_CSV: &str = "grid.csv";
pub const TREES_DIR: &str = "trees";

/// A grid point. Strategies the recorded trees cannot support carry no sigma.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub kind: StrategyKind,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "D")]
    pub d: u32,
    pub cost: u64,
    pub sigma: Option<f64>,
    pub feasible: bool,
    pub on_pareto_front: bool,
}

#[derive(Serialize)]
struct FrontPoint {
    kind: StrategyKind,
    #[serde(rename = "K")]
    k: u32,
    #[serde(rename = "D")]
    d: u32,
    cost: u64,
    sigma: f64,
}

#[derive(Serialize)]
struct TuneBody {
    trees: usize,
    kinds: Vec<StrategyKind>,
    k_range: (u32, u32),
    d_range: (u32, u32),
    grid: Vec<Row>,
    /// Front over every feasible strategy, across kinds.
    pareto_front: Vec<FrontPoint>,
}

fn load_trees(dir: &Path) -> CliResult<Vec<RecordedTree>> {
    let read = fs::read_dir(dir)
        .map_err(|e| CliError::Fatal(format!("cannot read trees directory {}: {e}", dir.display())))?;
    let mut paths: Vec<_> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Fatal(format!("no tree files in {}", dir.display())));
    }
    Ok(paths
        .iter()
        .map(|p| RecordedTree::load(p))
        .collect::<probegen::Result<_>>()?)
}

/// Evaluates every strategy of the grid, in kind, K, D order.
pub fn grid(
    trees: &[RecordedTree],
    kinds: &[StrategyKind],
    (k_lo, k_hi): (u32, u32),
    (d_lo, d_hi): (u32, u32),
) -> CliResult<(Vec<Row>, Vec<StrategyPointF64>)> {
    let mut slots = Vec::new();
    let mut points = Vec::new();
    for &kind in kinds {
        for k in k_lo..=k_hi {
            for d in d_lo..=d_hi {
                let s = Strategy::new(kind, k, d)?;
                if trees.iter().all(|t| t.supports(&s)) {
                    slots.push((s, Some(points.len())));
                    points.push(evaluate_strategy::<f64>(trees, s)?);
                } else {
                    slots.push((s, None));
                }
            }
        }
    }
    let feasible = grid_rows(&points);
    let rows = slots
        .into_iter()
        .map(|(s, idx)| -> CliResult<Row> {
            Ok(match idx {
                Some(i) => Row {
                    kind: s.kind,
                    k: s.k,
                    d: s.d,
                    cost: feasible[i].cost,
                    sigma: Some(feasible[i].sigma),
                    feasible: true,
                    on_pareto_front: feasible[i].on_pareto_front,
                },
                None => Row {
                    kind: s.kind,
                    k: s.k,
                    d: s.d,
                    cost: s.max_calls()?,
                    sigma: None,
                    feasible: false,
                    on_pareto_front: false,
                },
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((rows, points))
}

pub fn run(args: &TuneArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    let k_range = parse_range(&args.k_range)
        .ok_or_else(|| CliError::Usage(format!("bad --k-range `{}`", args.k_range)))?;
    let d_range = parse_range(&args.d_range)
        .ok_or_else(|| CliError::Usage(format!("bad --d-range `{}`", args.d_range)))?;
    let kinds = if args.kinds.is_empty() {
        StrategyKind::ALL.to_vec()
    } else {
        args.kinds.clone()
    };
    let trees = load_trees(&args.trees)?;
    let (rows, points) = grid(&trees, &kinds, k_range, d_range)?;

    ensure_dir(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join(GRID_CSV))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: cfg.out.join(GRID_CSV),
        source,
    })?;

    let front: Vec<FrontPoint> = pareto_front(&points)
        .into_iter()
        .map(|p| FrontPoint {
            kind: p.strategy.kind,
            k: p.strategy.k,
            d: p.strategy.d,
            cost: p.cost,
            sigma: p.sigma,
        })
        .collect();
    for p in &front {
        println!("{}(K={}, D={}): cost {} sigma {:.4}", p.kind, p.k, p.d, p.cost, p.sigma);
    }
    emit(
        "tune-strategy",
        &cfg,
        &TuneBody {
            trees: trees.len(),
            kinds,
            k_range,
            d_range,
            grid: rows,
            pareto_front: front,
        },
        started,
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RecordedFile {
    task_id: String,
    impl_a: String,
    impl_b: String,
    file: String,
    nodes: usize,
    any_success: bool,
}

#[derive(Serialize)]
struct RecordBody {
    #[serde(rename = "K_max")]
    k_max: u32,
    #[serde(rename = "D_max")]
    d_max: u32,
    trees: Vec<RecordedFile>,
}

/// Records a complete tree for every (ground truth, candidate) pair.
pub fn record(args: &RecordArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    if args.k_max == 0 || args.d_max == 0 {
        return Err(CliError::Usage("--k-max and --d-max must be at least 1".into()));
    }
    let corpus = load_corpus(&args.dataset)?;
    let rt = cfg.runtime()?;
    let mut jobs = Vec::new();
    for entry in &corpus.entries {
        match entry.ground_truth_impl() {
            Some(gt) => jobs.extend(candidates(entry).into_iter().map(|c| (entry, gt.clone(), c))),
            None => log::warn!("task {} has no ground truth; skipped", entry.task.task_id),
        }
    }
    let trees = rt.pool.install(|| {
        jobs.par_iter()
            .map(|(entry, gt, cand)| -> CliResult<RecordedTree> {
                let root = record_full_tree(
                    &entry.task,
                    gt,
                    cand,
                    args.k_max,
                    args.d_max,
                    &rt.search,
                    rt.ctx(),
                )?;
                Ok(RecordedTree::new(root, args.k_max, args.d_max)?)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let dir = cfg.out.join(TREES_DIR);
    ensure_dir(&dir)?;
    let mut files = Vec::new();
    for ((entry, gt, cand), tree) in jobs.iter().zip(&trees) {
        let name = format!(
            "{}__{}.json",
            file_stem(&entry.task.task_id),
            file_stem(&cand.impl_id)
        );
        write_json(&dir.join(&name), tree)?;
        files.push(RecordedFile {
            task_id: entry.task.task_id.clone(),
            impl_a: gt.impl_id.clone(),
            impl_b: cand.impl_id.clone(),
            file: format!("{TREES_DIR}/{name}"),
            nodes: tree.root.descendant_count(),
            any_success: tree.root.any_success(),
        });
    }
    println!("recorded {} trees in {}", files.len(), dir.display());
    emit(
        "record-trees",
        &cfg,
        &RecordBody {
            k_max: args.k_max,
            d_max: args.d_max,
            trees: files,
        },
        started,
    )?;
    Ok(EXIT_OK)
}

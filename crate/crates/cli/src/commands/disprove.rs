// SPDX-License-Identifier: Apache-2.0

use chrono::Utc;
use probegen::verdicts::{PairReport, PairStatus};
use rayon::prelude::*;
use serde::Serialize;

use super::{config, load_corpus, print_pair, search_pair, select_impls, select_task};
use crate::args::DisproveArgs;
use crate::error::{CliError, CliResult};
use crate::output::emit;
use crate::{EXIT_DISPROVED, EXIT_OK};

#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub pairs: usize,
    pub disproved: usize,
    pub not_disproved: usize,
    pub not_runnable: usize,
}

impl Summary {
    pub fn of(reports: &[PairReport]) -> Self {
        let count = |s| reports.iter().filter(|r| r.status == s).count();
        Summary {
            pairs: reports.len(),
            disproved: count(PairStatus::Disproved),
            not_disproved: count(PairStatus::NotDisproved),
            not_runnable: count(PairStatus::NotRunnable),
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    task_id: &'a str,
    impls: &'a [String],
    pairs: Vec<PairReport>,
    summary: Summary,
}

pub fn run(args: &DisproveArgs) -> CliResult<i32> {
    let started = Utc::now();
    let cfg = config(&args.run)?;
    if args.impls.is_empty() {
        return Err(CliError::Usage("no implementations selected; pass --impl at least twice".into()));
    }
    if args.impls.len() < 2 {
        return Err(CliError::Usage("a disproof needs at least two --impl ids".into()));
    }
    let corpus = load_corpus(&args.dataset)?;
    let entry = select_task(&corpus, args.task.as_deref())?;
    let impls = select_impls(entry, &args.impls)?;
    let rt = cfg.runtime()?;

    let pairs: Vec<(usize, usize)> = (0..impls.len())
        .flat_map(|i| (i + 1..impls.len()).map(move |j| (i, j)))
        .collect();
    let reports = rt.pool.install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| search_pair(&rt, &entry.task, &impls[i], &impls[j]))
            .collect::<CliResult<Vec<_>>>()
    })?;
    reports.iter().for_each(print_pair);

    let summary = Summary::of(&reports);
    let code = if summary.disproved > 0 { EXIT_DISPROVED } else { EXIT_OK };
    let path = emit(
        "disprove",
        &cfg,
        &Body {
            task_id: &entry.task.task_id,
            impls: &args.impls,
            pairs: reports,
            summary,
        },
        started,
    )?;
    log::info!("report written to {}", path.display());
    Ok(code)
}

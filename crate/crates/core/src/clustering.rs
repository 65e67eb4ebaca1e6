// SPDX-License-Identifier: Apache-2.0

//! Grouping implementations by observed behavior through repeated pairwise
//! searches, and the self-consistency score over the resulting clusters.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Implementation, Task};
use crate::error::{Error, Result};
use crate::harness::{InputOutcome, Job};
use crate::scalar::Probability;
use crate::search::{run_search, SearchConfig, SearchContext, SearchStatus};
use crate::verdicts::PairReport;

pub const DEFAULT_NP: usize = 10;

/// One separating input and the outcome classes it induced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEvidence {
    pub probe_source: String,
    pub input_repr: String,
    /// Connected components of the pairwise-equal relation on this input.
    pub classes: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Vec<String>>,
    pub evidence: Vec<ProbeEvidence>,
    /// Unordered pairs, each stored with the smaller id first.
    pub probed_pairs: Vec<(String, String)>,
    /// Members kept in place because a probe produced no outcome for them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incomplete: Vec<String>,
}

impl Partition {
    pub fn single(ids: &[String]) -> Self {
        Partition {
            clusters: vec![ids.to_vec()],
            evidence: Vec::new(),
            probed_pairs: Vec::new(),
            incomplete: Vec::new(),
        }
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.iter().any(|m| m == id))
    }

    /// Whether every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.clusters.iter().all(|c| {
            let Some(home) = c.first().and_then(|m| coarser.cluster_of(m)) else {
                return c.is_empty();
            };
            c.iter().all(|m| coarser.cluster_of(m) == Some(home))
        })
    }

    /// Clusters as sorted sets, for order-free comparison.
    pub fn canonical(&self) -> BTreeSet<BTreeSet<String>> {
        self.clusters
            .iter()
            .map(|c| c.iter().cloned().collect())
            .collect()
    }

    fn is_probed(&self, a: &str, b: &str) -> bool {
        let key = pair_key(a, b);
        self.probed_pairs.iter().any(|p| *p == key)
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Outcomes of one probe on a set of implementations.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcomes {
    pub probe_source: String,
    pub impl_ids: Vec<String>,
    /// Inputs that count for refinement; pairwise matrices index `impl_ids`.
    pub inputs: Vec<InputOutcome>,
}

impl ProbeOutcomes {
    fn index(&self, id: &str) -> Option<usize> {
        self.impl_ids.iter().position(|m| m == id)
    }

    /// Equal on every input.
    fn equal(&self, i: usize, j: usize) -> bool {
        self.inputs.iter().all(|inp| inp.equal(i, j).unwrap_or(true))
    }
}

/// Connected components of `members` under `equal`, each in member order,
/// ordered by first member.
fn components(n: usize, equal: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start].is_some() {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        label[start] = Some(id);
        let mut comp = Vec::new();
        while let Some(x) = stack.pop() {
            comp.push(x);
            for y in 0..n {
                if label[y].is_none() && equal(x, y) {
                    label[y] = Some(id);
                    stack.push(y);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Splits every cluster into the connected components of its members under
/// "equal on all inputs". Irrelevant findings leave the partition as is.
pub fn refine(partition: &Partition, outcomes: &ProbeOutcomes, important: bool) -> Partition {
    let mut next = partition.clone();
    if !important {
        return next;
    }
    next.clusters.clear();
    for cluster in &partition.clusters {
        let (known, missing): (Vec<&String>, Vec<&String>) =
            cluster.iter().partition(|m| outcomes.index(m).is_some());
        let idx: Vec<usize> = known.iter().filter_map(|m| outcomes.index(m)).collect();
        let mut parts: Vec<Vec<String>> = components(known.len(), |x, y| {
            outcomes.equal(idx[x], idx[y])
        })
        .into_iter()
        .map(|c| c.into_iter().map(|i| known[i].clone()).collect())
        .collect();
        if !missing.is_empty() {
            let largest = parts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            match largest {
                Some(i) => parts[i].extend(missing.iter().map(|m| (*m).clone())),
                None => parts.push(missing.iter().map(|m| (*m).clone()).collect()),
            }
            for m in missing {
                if !next.incomplete.contains(m) {
                    next.incomplete.push(m.clone());
                }
            }
            let order = |id: &String| cluster.iter().position(|m| m == id);
            for p in &mut parts {
                p.sort_by_key(order);
            }
            parts.sort_by_key(|p| p.first().and_then(order));
        }
        next.clusters.extend(parts);
    }
    for inp in &outcomes.inputs {
        if !inp.is_differentiating() {
            continue;
        }
        let classes = components(outcomes.impl_ids.len(), |x, y| {
            inp.equal(x, y).unwrap_or(true)
        })
        .into_iter()
        .map(|c| c.into_iter().map(|i| outcomes.impl_ids[i].clone()).collect())
        .collect();
        next.evidence.push(ProbeEvidence {
            probe_source: outcomes.probe_source.clone(),
            input_repr: inp.input_repr.clone(),
            classes,
        });
    }
    next
}

/// Result of searching one pair and evaluating the found probe on all
/// implementations.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFinding {
    pub important: bool,
    pub outcomes: ProbeOutcomes,
}

/// Runs a pairwise search. `Ok(None)` means no differentiating probe.
pub trait ProbeOracle {
    fn probe(&mut self, a: &str, b: &str, all: &[String]) -> Result<Option<ProbeFinding>>;
}

/// Iterative clustering state; each [`Clusterer::step`] probes one pair.
pub struct Clusterer<'o, O: ProbeOracle + ?Sized> {
    ids: Vec<String>,
    partition: Partition,
    oracle: &'o mut O,
    rng: ChaCha8Rng,
    searches: usize,
}

impl<'o, O: ProbeOracle + ?Sized> Clusterer<'o, O> {
    pub fn new(ids: &[String], oracle: &'o mut O, seed: u64) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::contract("clustering needs at least two implementations"));
        }
        let distinct: BTreeSet<_> = ids.iter().collect();
        if distinct.len() != ids.len() {
            return Err(Error::contract("duplicate implementation ids"));
        }
        Ok(Clusterer {
            ids: ids.to_vec(),
            partition: Partition::single(ids),
            oracle,
            rng: ChaCha8Rng::seed_from_u64(seed),
            searches: 0,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn searches(&self) -> usize {
        self.searches
    }

    fn unprobed_pairs(&self, cluster: &[String]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, a) in cluster.iter().enumerate() {
            for b in &cluster[i + 1..] {
                if !self.partition.is_probed(a, b) {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        out
    }

    /// Probes one pair from the largest cluster. Returns false when the
    /// largest clusters have no unprobed pair left or all are singletons.
    pub fn step(&mut self) -> Result<bool> {
        let max = self.partition.clusters.iter().map(Vec::len).max().unwrap_or(0);
        if max < 2 {
            return Ok(false);
        }
        let candidates: Vec<Vec<(String, String)>> = self
            .partition
            .clusters
            .iter()
            .filter(|c| c.len() == max)
            .map(|c| self.unprobed_pairs(c))
            .filter(|p| !p.is_empty())
            .collect();
        if candidates.is_empty() {
            return Ok(false);
        }
        let pairs = &candidates[self.rng.random_range(0..candidates.len())];
        let (a, b) = pairs[self.rng.random_range(0..pairs.len())].clone();
        self.partition.probed_pairs.push(pair_key(&a, &b));
        self.searches += 1;
        match self.oracle.probe(&a, &b, &self.ids) {
            Ok(Some(finding)) => {
                self.partition = refine(&self.partition, &finding.outcomes, finding.important);
            }
            Ok(None) => {}
            Err(e) => log::warn!("search on {a}|{b} failed: {e}"),
        }
        Ok(true)
    }
}

/// At most `n_p` pairwise searches, starting from one cluster.
pub fn run_clustering<O: ProbeOracle + ?Sized>(
    ids: &[String],
    n_p: usize,
    oracle: &mut O,
    seed: u64,
) -> Result<Partition> {
    let mut c = Clusterer::new(ids, oracle, seed)?;
    while c.searches() < n_p && c.step()? {}
    Ok(c.partition)
}

/// [`ProbeOracle`] backed by the probe search, the harness and the judge.
pub struct PipelineOracle<'a> {
    pub task: &'a Task,
    pub impls: &'a [Implementation],
    pub config: &'a SearchConfig,
    pub ctx: SearchContext<'a>,
    /// One report per searched pair.
    pub reports: Vec<PairReport>,
}

impl<'a> PipelineOracle<'a> {
    pub fn new(
        task: &'a Task,
        impls: &'a [Implementation],
        config: &'a SearchConfig,
        ctx: SearchContext<'a>,
    ) -> Self {
        PipelineOracle {
            task,
            impls,
            config,
            ctx,
            reports: Vec::new(),
        }
    }

    fn get(&self, id: &str) -> Result<&'a Implementation> {
        self.impls
            .iter()
            .find(|i| i.impl_id == id)
            .ok_or_else(|| Error::contract(format!("unknown implementation `{id}`")))
    }
}

impl ProbeOracle for PipelineOracle<'_> {
    fn probe(&mut self, a: &str, b: &str, all: &[String]) -> Result<Option<ProbeFinding>> {
        let (ia, ib) = (self.get(a)?, self.get(b)?);
        let result = run_search(self.task, ia, ib, self.config, self.ctx)?;
        let report = PairReport::from_search(&self.task.task_id, a, b, &result);
        let usable = !result.flaky && result.runnable;
        self.reports.push(report);
        if !usable {
            return Ok(None);
        }
        let (important, findings) = if result.status == SearchStatus::Disproved {
            (true, &result.counterexamples)
        } else if !result.spurious.is_empty() {
            (false, &result.spurious)
        } else {
            return Ok(None);
        };
        let probe_source = findings[0].probe_source.clone();
        let wanted: BTreeSet<&str> = findings
            .iter()
            .filter(|c| c.probe_source == probe_source)
            .map(|c| c.input_repr.as_str())
            .collect();
        let members: Vec<&Implementation> =
            all.iter().map(|id| self.get(id)).collect::<Result<_>>()?;
        let job = Job {
            target_function: self.task.target_function.clone(),
            implementations: members.iter().map(|m| m.source.clone()).collect(),
            probe_source: probe_source.clone(),
            limits: self.config.limits.clone(),
        };
        let report = self.ctx.executor.execute(&job)?;
        report.validate(members.len())?;
        Ok(Some(ProbeFinding {
            important,
            outcomes: ProbeOutcomes {
                probe_source,
                impl_ids: all.to_vec(),
                inputs: report
                    .per_input
                    .into_iter()
                    .filter(|i| wanted.contains(i.input_repr.as_str()))
                    .collect(),
            },
        }))
    }
}

/// How tied largest clusters are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Mean of the tied clusters' pass rates.
    #[default]
    ClusterMean,
    /// Pass rate over the union of the tied clusters' members.
    ItemWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SscScore<T> {
    pub pass_at_1: T,
    pub winning_clusters: Vec<Vec<String>>,
}

/// Pass rate of the largest cluster, combining ties per `mode`.
pub fn ssc_pass1<T: Probability>(
    partition: &Partition,
    pass_flags: &HashMap<String, bool>,
    mode: TieMode,
) -> Result<SscScore<T>> {
    let max = partition.clusters.iter().map(Vec::len).max().unwrap_or(0);
    if max == 0 {
        return Err(Error::contract("self-consistency score of an empty partition"));
    }
    let winners: Vec<Vec<String>> = partition
        .clusters
        .iter()
        .filter(|c| c.len() == max)
        .cloned()
        .collect();
    let mut passed = Vec::with_capacity(winners.len());
    for c in &winners {
        let mut n = 0u64;
        for id in c {
            match pass_flags.get(id) {
                Some(true) => n += 1,
                Some(false) => {}
                None => {
                    return Err(Error::contract(format!("no pass flag for `{id}`")));
                }
            }
        }
        passed.push(n);
    }
    let pass_at_1 = match mode {
        TieMode::ClusterMean => {
            let sum = passed
                .iter()
                .fold(T::zero(), |acc, &n| acc + T::ratio(n, max as u64));
            sum / T::from_count(winners.len() as u64)
        }
        TieMode::ItemWeighted => T::ratio(
            passed.iter().sum(),
            (max * winners.len()) as u64,
        ),
    };
    Ok(SscScore {
        pass_at_1,
        winning_clusters: winners,
    })
}

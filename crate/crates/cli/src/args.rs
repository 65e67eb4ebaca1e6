// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probegen::clustering::{TieMode, DEFAULT_NP};
use probegen::search::StrategyKind;

pub const DEFAULT_MODEL: &str = "gemini-2.0-flash";
pub const DEFAULT_HARNESS: &str = "probegen-harness";

#[derive(Debug, Parser)]
#[command(
    name = "probegen",
    version,
    about = "Disprove functional equivalence of code with model-generated probes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for counterexamples between selected implementations of a task.
    Disprove(DisproveArgs),
    /// Compare unit-test verdicts with probe verdicts against each task's ground truth.
    EvalDataset(EvalArgs),
    /// Record complete search trees for strategy tuning.
    RecordTrees(RecordArgs),
    /// Score a grid of search strategies on recorded trees.
    TuneStrategy(TuneArgs),
    /// Partition a task's implementations by observed behavior.
    Cluster(ClusterArgs),
    /// Self-consistency pass@1 from behavioral clusters.
    Ssc(SscArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Http,
    Scripted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpuriousArg {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    ClusterMean,
    ItemWeighted,
}

impl From<TieArg> for TieMode {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::ClusterMean => TieMode::ClusterMean,
            TieArg::ItemWeighted => TieMode::ItemWeighted,
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Branching schedule: full, top, decreasing, increasing, halving, doubling.
    #[arg(long, default_value = "decreasing")]
    pub strategy: StrategyKind,
    /// Initial branching factor.
    #[arg(long = "k", default_value_t = 3)]
    pub k: u32,
    /// Maximum depth.
    #[arg(long = "d", default_value_t = 4)]
    pub d: u32,
    /// Cap on probe-generation calls per pair (default: the strategy's node count).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Judge differences for relevance (default).
    #[arg(long, overrides_with = "no_filter")]
    pub filter: bool,
    /// Count every raw difference as a disproof.
    #[arg(long = "no-filter", overrides_with = "filter")]
    pub no_filter: bool,
    #[arg(long, value_enum, default_value = "continue")]
    pub on_spurious: SpuriousArg,
    /// Record every success instead of stopping at the first.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: String,
    /// Judge model (default: same as --model).
    #[arg(long)]
    pub judge_model: Option<String>,
    /// Probe sampling temperature.
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    pub judge_temperature: f64,
    /// Harness wall-clock limit per probe, in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub timeout: f64,
    /// HTTP request timeout, in seconds.
    #[arg(long, default_value_t = 120)]
    pub request_timeout: u64,
    /// Attempts per model call, counting the first.
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    /// Tasks processed concurrently.
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "probegen-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "http")]
    pub provider: ProviderArg,
    /// Response fixture for --provider scripted.
    #[arg(long, required_if_eq("provider", "scripted"))]
    pub script: Option<PathBuf>,
    /// Chat-completions endpoint root for --provider http.
    #[arg(long, env = "PROBEGEN_BASE_URL", default_value = "https://api.openai.com")]
    pub base_url: String,
    /// Harness command; the job is written to its stdin.
    #[arg(long, default_value = DEFAULT_HARNESS, conflicts_with = "harness_script")]
    pub harness: String,
    /// Replay harness reports from a fixture instead of running a harness.
    #[arg(long)]
    pub harness_script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DisproveArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// JSONL corpus.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Task id; optional when the corpus holds a single task.
    #[arg(long)]
    pub task: Option<String>,
    /// Implementation ids (repeatable, at least two); every pair is searched.
    /// `ground_truth` selects the task's reference solution.
    #[arg(long = "impl")]
    pub impls: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Branching of the recorded trees.
    #[arg(long, default_value_t = 4)]
    pub k_max: u32,
    /// Depth of the recorded trees.
    #[arg(long, default_value_t = 3)]
    pub d_max: u32,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory of recorded tree JSON files.
    #[arg(long)]
    pub trees: PathBuf,
    /// Strategy kinds, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<StrategyKind>,
    /// Inclusive K range, `lo-hi` or a single value.
    #[arg(long, default_value = "1-4")]
    pub k_range: String,
    /// Inclusive D range, `lo-hi` or a single value.
    #[arg(long, default_value = "1-3")]
    pub d_range: String,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Task id (default: every task).
    #[arg(long)]
    pub task: Option<String>,
    /// Implementation ids to cluster (default: all but the ground truth).
    #[arg(long = "impl")]
    pub impls: Vec<String>,
    /// Maximum pairwise searches per task.
    #[arg(long, default_value_t = DEFAULT_NP)]
    pub np: usize,
}

#[derive(Debug, Args)]
pub struct SscArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Corpus supplying the pass flags (and the implementations to cluster).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report written by `cluster`; clusters are computed when absent.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NP)]
    pub np: usize,
    #[arg(long, value_enum, default_value = "cluster-mean")]
    pub tie_mode: TieArg,
}

/// Parses `lo-hi` or `n` into an inclusive range.
pub fn parse_range(text: &str) -> Option<(u32, u32)> {
    let text = text.trim();
    let (lo, hi) = match text.split_once('-') {
        Some((lo, hi)) => (lo.trim().parse().ok()?, hi.trim().parse().ok()?),
        None => {
            let n = text.parse().ok()?;
            (n, n)
        }
    };
    (lo >= 1 && lo <= hi).then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1-4"), Some((1, 4)));
        assert_eq!(parse_range(" 3 "), Some((3, 3)));
        assert_eq!(parse_range("4-1"), None);
        assert_eq!(parse_range("0-2"), None);
        assert_eq!(parse_range("a-b"), None);
    }

    #[test]
    fn filter_flags_override_each_other() {
        let parse = |extra: &[&str]| {
            let mut argv = vec!["probegen", "eval-dataset", "--dataset", "x.jsonl"];
            argv.extend_from_slice(extra);
            match Cli::try_parse_from(argv).unwrap().command {
                Command::EvalDataset(a) => a.run,
                _ => unreachable!(),
            }
        };
        assert!(!parse(&[]).no_filter);
        assert!(parse(&["--no-filter"]).no_filter);
        assert!(!parse(&["--no-filter", "--filter"]).no_filter);
    }

    #[test]
    fn scripted_provider_requires_a_script() {
        let r = Cli::try_parse_from([
            "probegen", "eval-dataset", "--dataset", "x", "--provider", "scripted",
        ]);
        assert!(r.is_err());
    }
}

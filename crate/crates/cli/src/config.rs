// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use probegen::corpus::ResponseCache;
use probegen::gateway::{
    ChatProvider, DecodeParams, HttpProvider, LlmGateway, RetryPolicy, ScriptedProvider,
};
use probegen::harness::{Executor, Limits, ScriptedExecutor, SubprocessExecutor};
use probegen::search::{OnSpurious, SearchConfig, SearchContext, Strategy};
use serde::Serialize;

use crate::args::{ProviderArg, RunArgs, SpuriousArg};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Http,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarnessSpec {
    Subprocess { command: String },
    Scripted { path: PathBuf },
}

/// Every setting that influences a run. Serialized into each report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub budget: Option<u64>,
    pub effective_budget: u64,
    pub filter: bool,
    pub on_spurious: OnSpurious,
    pub exhaustive: bool,
    pub model: String,
    pub judge_model: String,
    pub temperature: f64,
    pub judge_temperature: f64,
    pub timeout_seconds: f64,
    pub request_timeout_seconds: u64,
    pub max_attempts: u32,
    pub max_prompt_turns: Option<usize>,
    pub limits: Limits,
    pub parallelism: usize,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub provider: ProviderKind,
    pub script: Option<PathBuf>,
    pub base_url: String,
    pub harness: HarnessSpec,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> CliResult<Self> {
        let strategy = Strategy::new(a.strategy, a.k, a.d)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let effective_budget = match a.budget {
            Some(b) => b,
            None => strategy.max_calls()?,
        };
        if a.parallelism == 0 {
            return Err(CliError::Usage("--parallelism must be at least 1".into()));
        }
        if a.max_attempts == 0 {
            return Err(CliError::Usage("--max-attempts must be at least 1".into()));
        }
        let limits = Limits {
            wall_seconds: a.timeout,
            ..Limits::default()
        };
        limits.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for (flag, t) in [("--temperature", a.temperature), ("--judge-temperature", a.judge_temperature)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("{flag} must be a non-negative number")));
            }
        }
        Ok(RunConfig {
            strategy,
            budget: a.budget,
            effective_budget,
            filter: !a.no_filter,
            on_spurious: match a.on_spurious {
                SpuriousArg::Continue => OnSpurious::Continue,
                SpuriousArg::Stop => OnSpurious::Stop,
            },
            exhaustive: a.exhaustive,
            model: a.model.clone(),
            judge_model: a.judge_model.clone().unwrap_or_else(|| a.model.clone()),
            temperature: a.temperature,
            judge_temperature: a.judge_temperature,
            timeout_seconds: a.timeout,
            request_timeout_seconds: a.request_timeout,
            max_attempts: a.max_attempts,
            max_prompt_turns: SearchConfig::default().max_prompt_turns,
            limits,
            parallelism: a.parallelism,
            seed: a.seed,
            cache_dir: a.cache_dir.clone(),
            out: a.out.clone(),
            provider: match a.provider {
                ProviderArg::Http => ProviderKind::Http,
                ProviderArg::Scripted => ProviderKind::Scripted,
            },
            script: a.script.clone(),
            base_url: a.base_url.clone(),
            harness: match &a.harness_script {
                Some(path) => HarnessSpec::Scripted { path: path.clone() },
                None => HarnessSpec::Subprocess {
                    command: a.harness.clone(),
                },
            },
        })
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            strategy: self.strategy,
            budget: self.budget,
            filter_enabled: self.filter,
            on_spurious: self.on_spurious,
            exhaustive: self.exhaustive,
            probe_params: DecodeParams::new(self.model.clone(), self.temperature),
            judge_params: DecodeParams::new(self.judge_model.clone(), self.judge_temperature),
            limits: self.limits.clone(),
            max_prompt_turns: self.max_prompt_turns,
            confirm_differentiating: true,
        }
    }

    /// Instantiates the model gateway, harness and worker pool.
    pub fn runtime(&self) -> CliResult<Runtime> {
        let provider: Arc<dyn ChatProvider> = match self.provider {
            ProviderKind::Http => Arc::new(HttpProvider::from_env(
                self.base_url.clone(),
                Duration::from_secs(self.request_timeout_seconds),
            )),
            ProviderKind::Scripted => {
                let path = self
                    .script
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--provider scripted needs --script".into()))?;
                Arc::new(ScriptedProvider::from_file(path)?)
            }
        };
        let retry = match self.provider {
            ProviderKind::Scripted => RetryPolicy::no_delay(self.max_attempts),
            ProviderKind::Http => RetryPolicy {
                max_attempts: self.max_attempts,
                ..RetryPolicy::default()
            },
        };
        let mut gateway = LlmGateway::new(provider).with_retry(retry);
        if let Some(dir) = &self.cache_dir {
            gateway = gateway.with_cache(Arc::new(ResponseCache::open(dir.clone())?));
        }
        let executor: Box<dyn Executor> = match &self.harness {
            HarnessSpec::Subprocess { command } => {
                Box::new(SubprocessExecutor::from_command_line(command)?)
            }
            HarnessSpec::Scripted { path } => Box::new(ScriptedExecutor::from_file(path)?),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| CliError::Fatal(format!("worker pool: {e}")))?;
        Ok(Runtime {
            search: self.search_config(),
            gateway,
            executor,
            pool,
        })
    }
}

pub struct Runtime {
    pub search: SearchConfig,
    pub gateway: LlmGateway,
    pub executor: Box<dyn Executor>,
    pub pool: rayon::ThreadPool,
}

impl Runtime {
    pub fn ctx(&self) -> SearchContext<'_> {
        SearchContext {
            gateway: &self.gateway,
            executor: self.executor.as_ref(),
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Client side of the execution harness.
//!
//! The harness itself is a separate sandboxed process. This module owns the
//! wire types (`Job` in, `OutcomeReport` out), the [`Executor`] trait the
//! search engine calls, a subprocess executor speaking the stdin/stdout
//! protocol, and a scripted executor for replays and tests.

mod value;

pub use value::{python_str_repr, CanonicalValue, Numeric, SeqKind};

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};

pub const DEFAULT_TRUNCATION_LENGTH: u32 = 1000;
pub const DEFAULT_MAX_INPUTS: u32 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_seconds: f64,
    pub memory_bytes: u64,
    pub max_inputs_per_probe: u32,
    pub iterable_truncation_length: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            wall_seconds: 10.0,
            memory_bytes: 1 << 30,
            max_inputs_per_probe: DEFAULT_MAX_INPUTS,
            iterable_truncation_length: DEFAULT_TRUNCATION_LENGTH,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_seconds > 0.0)
            || self.memory_bytes == 0
            || self.max_inputs_per_probe == 0
            || self.iterable_truncation_length == 0
        {
            return Err(Error::contract(format!("harness limits must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub target_function: String,
    pub implementations: Vec<String>,
    pub probe_source: String,
    pub limits: Limits,
}

/// Results for one generated input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputOutcome {
    /// Call arguments as displayed, e.g. `'aAaA', 'aa'`.
    pub input_repr: String,
    /// Whether the input passed the signature type check. Invalid inputs
    /// are never executed.
    pub valid: bool,
    #[serde(default)]
    pub outcomes: Vec<CanonicalValue>,
    #[serde(default)]
    pub pairwise_equal: Vec<Vec<bool>>,
}

impl InputOutcome {
    /// Builds an input whose pairwise verdicts come from
    /// [`CanonicalValue::loosely_equal`]. Intended for mocks.
    pub fn from_outcomes(input_repr: impl Into<String>, outcomes: Vec<CanonicalValue>) -> Self {
        let pairwise_equal = outcomes
            .iter()
            .map(|a| outcomes.iter().map(|b| a.loosely_equal(b)).collect())
            .collect();
        InputOutcome {
            input_repr: input_repr.into(),
            valid: true,
            outcomes,
            pairwise_equal,
        }
    }

    pub fn invalid(input_repr: impl Into<String>) -> Self {
        InputOutcome {
            input_repr: input_repr.into(),
            valid: false,
            outcomes: Vec::new(),
            pairwise_equal: Vec::new(),
        }
    }

    pub fn is_differentiating(&self) -> bool {
        self.valid && self.pairwise_equal.iter().flatten().any(|eq| !eq)
    }

    /// Equality of implementations `i` and `j` on this input; invalid inputs
    /// separate nothing.
    pub fn equal(&self, i: usize, j: usize) -> Option<bool> {
        if !self.valid {
            return Some(true);
        }
        self.pairwise_equal.get(i).and_then(|row| row.get(j)).copied()
    }

    pub fn output_displays(&self) -> Vec<String> {
        self.outcomes.iter().map(CanonicalValue::display).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub per_input: Vec<InputOutcome>,
    #[serde(default)]
    pub probe_error: Option<String>,
    pub any_differentiating: bool,
}

impl OutcomeReport {
    pub fn from_inputs(per_input: Vec<InputOutcome>) -> Self {
        let any_differentiating = per_input.iter().any(InputOutcome::is_differentiating);
        OutcomeReport {
            per_input,
            probe_error: None,
            any_differentiating,
        }
    }

    pub fn probe_failure(message: impl Into<String>) -> Self {
        OutcomeReport {
            per_input: Vec::new(),
            probe_error: Some(message.into()),
            any_differentiating: false,
        }
    }

    pub fn differentiating_inputs(&self) -> impl Iterator<Item = &InputOutcome> {
        self.per_input.iter().filter(|i| i.is_differentiating())
    }

    pub fn has_valid_input(&self) -> bool {
        self.per_input.iter().any(|i| i.valid)
    }

    /// Stable content hash, recorded in serialized trees.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("report serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Checks the structural invariants for a job over `n_impls`
    /// implementations.
    pub fn validate(&self, n_impls: usize) -> Result<()> {
        for (idx, input) in self.per_input.iter().enumerate() {
            if !input.valid {
                continue;
            }
            let bad = |what: &str| {
                Err(Error::Harness(format!(
                    "input #{idx} ({}): {what}",
                    input.input_repr
                )))
            };
            if input.outcomes.len() != n_impls {
                return bad("outcome count does not match implementation count");
            }
            let m = &input.pairwise_equal;
            if m.len() != n_impls || m.iter().any(|row| row.len() != n_impls) {
                return bad("pairwise_equal is not square over the implementations");
            }
            for i in 0..n_impls {
                if !m[i][i] {
                    return bad("pairwise_equal is not reflexive");
                }
                for j in 0..i {
                    if m[i][j] != m[j][i] {
                        return bad("pairwise_equal is not symmetric");
                    }
                }
            }
        }
        let expected = self.per_input.iter().any(InputOutcome::is_differentiating);
        if expected != self.any_differentiating {
            return Err(Error::Harness(
                "any_differentiating disagrees with per-input verdicts".to_string(),
            ));
        }
        Ok(())
    }
}

pub trait Executor: Send + Sync {
    fn execute(&self, job: &Job) -> Result<OutcomeReport>;
}

impl<E: Executor + ?Sized> Executor for std::sync::Arc<E> {
    fn execute(&self, job: &Job) -> Result<OutcomeReport> {
        (**self).execute(job)
    }
}

/// Runs the harness as a child process: the job JSON goes to stdin and
/// exactly one report JSON document is read from stdout.
#[derive(Clone, Debug)]
pub struct SubprocessExecutor {
    program: String,
    args: Vec<String>,
    /// Added to the job's wall limit before the child is killed.
    grace: Duration,
}

impl SubprocessExecutor {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        SubprocessExecutor {
            program: program.into(),
            args,
            grace: Duration::from_secs(1),
        }
    }

    /// Parses a shell-like command line split on whitespace.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Invalid("empty harness command".to_string()))?;
        Ok(Self::new(program, parts.collect()))
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }
}

impl Executor for SubprocessExecutor {
    fn execute(&self, job: &Job) -> Result<OutcomeReport> {
        job.limits.validate()?;
        let payload = serde_json::to_vec(job)?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Harness(format!("cannot spawn `{}`: {e}", self.program)))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            // The child may exit without reading; a broken pipe is not our error.
            let _ = stdin.write_all(&payload);
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let limit = Duration::from_secs_f64(job.limits.wall_seconds) + self.grace;
        let status = match child
            .wait_timeout(limit)
            .map_err(|e| Error::Harness(format!("waiting on harness: {e}")))?
        {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Harness(format!(
                    "harness exceeded wall limit of {:.1}s",
                    limit.as_secs_f64()
                )));
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(Error::Harness(format!(
                "harness exited with {status}: {}",
                String::from_utf8_lossy(&err).trim()
            )));
        }
        let report: OutcomeReport = serde_json::from_slice(&out)
            .map_err(|e| Error::Harness(format!("malformed report on stdout: {e}")))?;
        report.validate(job.implementations.len())?;
        Ok(report)
    }
}

fn normalize_source(src: &str) -> String {
    src.lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default)]
    reports: Vec<ScriptedReport>,
    #[serde(default)]
    default: Option<OutcomeReport>,
}

#[derive(Deserialize)]
struct ScriptedReport {
    probe_source: String,
    report: OutcomeReport,
}

/// Replays fixed reports keyed by probe source (whitespace-normalized).
#[derive(Debug, Default)]
pub struct ScriptedExecutor {
    reports: HashMap<String, OutcomeReport>,
    default: Option<OutcomeReport>,
    calls: AtomicUsize,
}

impl ScriptedExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_report(mut self, probe_source: &str, report: OutcomeReport) -> Self {
        self.reports.insert(normalize_source(probe_source), report);
        self
    }

    pub fn with_default(mut self, report: OutcomeReport) -> Self {
        self.default = Some(report);
        self
    }

    /// Loads `{"reports": [{"probe_source", "report"}], "default": report?}`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScriptFile = serde_json::from_str(&text)?;
        let mut exec = ScriptedExecutor::new();
        for r in file.reports {
            exec = exec.with_report(&r.probe_source, r.report);
        }
        exec.default = file.default;
        Ok(exec)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Executor for ScriptedExecutor {
    fn execute(&self, job: &Job) -> Result<OutcomeReport> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.reports
            .get(&normalize_source(&job.probe_source))
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| Error::Harness("no scripted report for probe".to_string()))
    }
}

/// Executor backed by a closure.
pub struct FnExecutor<F>(pub F);

impl<F> Executor for FnExecutor<F>
where
    F: Fn(&Job) -> Result<OutcomeReport> + Send + Sync,
{
    fn execute(&self, job: &Job) -> Result<OutcomeReport> {
        (self.0)(job)
    }
}

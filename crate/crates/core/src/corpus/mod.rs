// SPDX-License-Identifier: Apache-2.0

//! Tasks, implementations and corpus ingestion.
//!
//! A corpus is line-delimited JSON with one task per line and its
//! implementations embedded. LBPP-style records (`instruction`, `completion`,
//! `test`, `signature_name`) are accepted through an adapter.

mod cache;

pub use cache::{CacheEntry, CacheKey, ResponseCache};

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const LANGUAGE_PYTHON: &str = "python";

/// Implementation id given to the ground truth when it is materialized as an
/// implementation.
pub const GROUND_TRUTH_ID: &str = "ground_truth";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub description: String,
    pub target_function: String,
    #[serde(rename = "signature")]
    pub signature_text: String,
    pub ground_truth: Option<String>,
    pub unit_tests: Option<String>,
    #[serde(default = "default_language")]
    pub language_tag: String,
}

fn default_language() -> String {
    LANGUAGE_PYTHON.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    GroundTruth,
    Sampled,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Implementation {
    pub impl_id: String,
    pub task_id: String,
    pub source: String,
    pub origin: Origin,
    pub passes_unit_tests: Option<bool>,
}

/// A task together with its implementations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskEntry {
    pub task: Task,
    pub implementations: Vec<Implementation>,
}

impl TaskEntry {
    pub fn implementation(&self, impl_id: &str) -> Option<&Implementation> {
        self.implementations.iter().find(|i| i.impl_id == impl_id)
    }

    /// The ground-truth implementation: an embedded one with origin
    /// `ground_truth`, else one built from `task.ground_truth`.
    pub fn ground_truth_impl(&self) -> Option<Implementation> {
        if let Some(existing) = self
            .implementations
            .iter()
            .find(|i| i.origin == Origin::GroundTruth)
        {
            return Some(existing.clone());
        }
        self.task.ground_truth.as_ref().map(|src| Implementation {
            impl_id: GROUND_TRUTH_ID.to_string(),
            task_id: self.task.task_id.clone(),
            source: src.clone(),
            origin: Origin::GroundTruth,
            passes_unit_tests: Some(true),
        })
    }
}

/// A line that could not be ingested.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub task_id: Option<String>,
    pub impl_id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub entries: Vec<TaskEntry>,
    pub rejects: Vec<Reject>,
}

impl Corpus {
    pub fn task(&self, task_id: &str) -> Option<&TaskEntry> {
        self.entries.iter().find(|e| e.task.task_id == task_id)
    }

    pub fn implementation_count(&self) -> usize {
        self.entries.iter().map(|e| e.implementations.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

/// Whether `source` lexically defines a function called `name`.
pub fn defines_function(source: &str, name: &str) -> bool {
    let pattern = format!(r"(?m)^[ \t]*(?:async[ \t]+)?def[ \t]+{}[ \t]*\(", regex::escape(name));
    Regex::new(&pattern)
        .map(|re| re.is_match(source))
        .unwrap_or(false)
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Corpus> {
    let DatasetFormat::Jsonl = format;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corpus = parse_jsonl(&text);
    if corpus.entries.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    Ok(corpus)
}

/// Parses corpus text. Never fails; bad lines land in `rejects`.
pub fn parse_jsonl(text: &str) -> Corpus {
    let mut corpus = Corpus::default();
    let mut seen_tasks = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                corpus.rejects.push(Reject {
                    line,
                    task_id: None,
                    impl_id: None,
                    reason: format!("malformed JSON: {e}"),
                });
                continue;
            }
        };
        let parsed = if value.get("instruction").is_some() {
            parse_lbpp_record(&value)
        } else {
            parse_native_record(&value)
        };
        let (task, impls) = match parsed {
            Ok(r) => r,
            Err(reason) => {
                corpus.rejects.push(Reject {
                    line,
                    task_id: value.get("task_id").and_then(Value::as_str).map(str::to_string),
                    impl_id: None,
                    reason,
                });
                continue;
            }
        };
        if !seen_tasks.insert(task.task_id.clone()) {
            corpus.rejects.push(Reject {
                line,
                task_id: Some(task.task_id.clone()),
                impl_id: None,
                reason: "duplicate task_id".to_string(),
            });
            continue;
        }

        let mut kept = Vec::with_capacity(impls.len());
        let mut seen_impls = HashSet::new();
        for imp in impls {
            let reason = if imp.source.trim().is_empty() {
                Some("empty source")
            } else if !seen_impls.insert(imp.impl_id.clone()) {
                Some("duplicate impl_id")
            } else if !defines_function(&imp.source, &task.target_function) {
                Some("missing target function")
            } else {
                None
            };
            match reason {
                Some(reason) => corpus.rejects.push(Reject {
                    line,
                    task_id: Some(task.task_id.clone()),
                    impl_id: Some(imp.impl_id.clone()),
                    reason: reason.to_string(),
                }),
                None => kept.push(imp),
            }
        }
        corpus.entries.push(TaskEntry {
            task,
            implementations: kept,
        });
    }
    corpus
}

#[derive(Deserialize)]
struct NativeRecord {
    task_id: String,
    description: String,
    target_function: String,
    signature: String,
    ground_truth: Option<String>,
    unit_tests: Option<String>,
    #[serde(default)]
    implementations: Vec<NativeImpl>,
}

#[derive(Deserialize)]
struct NativeImpl {
    impl_id: String,
    source: String,
    origin: Origin,
    passes_unit_tests: Option<bool>,
}

fn parse_native_record(value: &Value) -> Result<(Task, Vec<Implementation>), String> {
    let rec: NativeRecord =
        serde_json::from_value(value.clone()).map_err(|e| format!("invalid record: {e}"))?;
    if rec.target_function.trim().is_empty() {
        return Err("empty target_function".to_string());
    }
    if rec.task_id.is_empty() {
        return Err("empty task_id".to_string());
    }
    let task = Task {
        task_id: rec.task_id,
        description: rec.description,
        target_function: rec.target_function,
        signature_text: rec.signature,
        ground_truth: rec.ground_truth,
        unit_tests: rec.unit_tests,
        language_tag: default_language(),
    };
    let impls = rec
        .implementations
        .into_iter()
        .map(|i| Implementation {
            impl_id: i.impl_id,
            task_id: task.task_id.clone(),
            source: i.source,
            origin: i.origin,
            passes_unit_tests: i.passes_unit_tests,
        })
        .collect();
    Ok((task, impls))
}

fn lbpp_str(value: &Value, field: &str) -> Result<String, String> {
    match value.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        // LBPP ids are sometimes numeric.
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(format!("missing required field `{field}`")),
    }
}

/// Adapter for LBPP-style rows: `instruction` becomes the description and
/// `completion` the ground truth.
fn parse_lbpp_record(value: &Value) -> Result<(Task, Vec<Implementation>), String> {
    let task_id = lbpp_str(value, "task_id")?;
    let description = lbpp_str(value, "instruction")?;
    let completion = lbpp_str(value, "completion")?;
    let target_function = lbpp_str(value, "signature_name")?;
    let unit_tests = value.get("test").and_then(Value::as_str).map(str::to_string);
    let signature_text = value
        .get("signature")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| extract_signature(&completion, &target_function).unwrap_or_default());

    let task = Task {
        task_id: task_id.clone(),
        description,
        target_function,
        signature_text,
        ground_truth: Some(completion),
        unit_tests,
        language_tag: default_language(),
    };
    let impls = match value.get("implementations") {
        Some(list) => serde_json::from_value::<Vec<NativeImpl>>(list.clone())
            .map_err(|e| format!("invalid implementations: {e}"))?
            .into_iter()
            .map(|i| Implementation {
                impl_id: i.impl_id,
                task_id: task_id.clone(),
                source: i.source,
                origin: i.origin,
                passes_unit_tests: i.passes_unit_tests,
            })
            .collect(),
        None => Vec::new(),
    };
    Ok((task, impls))
}

/// The `def name(...)` header line of `name` in `source`, if present.
pub fn extract_signature(source: &str, name: &str) -> Option<String> {
    let pattern = format!(
        r"(?m)^[ \t]*((?:async[ \t]+)?def[ \t]+{}[ \t]*\((?s:.*?)\)[^:\n]*:)",
        regex::escape(name)
    );
    let re = Regex::new(&pattern).ok()?;
    re.captures(source).map(|c| c[1].trim().to_string())
}

/// Serializes an entry as a native corpus line.
pub fn to_jsonl_record(entry: &TaskEntry) -> Value {
    serde_json::json!({
        "task_id": entry.task.task_id,
        "description": entry.task.description,
        "target_function": entry.task.target_function,
        "signature": entry.task.signature_text,
        "ground_truth": entry.task.ground_truth,
        "unit_tests": entry.task.unit_tests,
        "implementations": entry.implementations.iter().map(|i| serde_json::json!({
            "impl_id": i.impl_id,
            "source": i.source,
            "origin": i.origin,
            "passes_unit_tests": i.passes_unit_tests,
        })).collect::<Vec<_>>(),
    })
}

/// Serializes a task as an LBPP-style row.
pub fn to_lbpp_record(task: &Task) -> Value {
    serde_json::json!({
        "task_id": task.task_id,
        "instruction": task.description,
        "completion": task.ground_truth,
        "test": task.unit_tests,
        "signature_name": task.target_function,
        "signature": task.signature_text,
    })
}

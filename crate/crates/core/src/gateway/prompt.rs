// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::feedback::{FeedbackMessage, GENERATOR_NAME};
use crate::corpus::{defines_function, Implementation, Task};
use crate::error::{Error, Result};

/// Versioned probe-generation instructions.
pub const PROBE_INSTRUCTIONS_V1: &str = include_str!("../../assets/probe_instructions_v1.txt");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub probe_source: String,
    pub feedback: FeedbackMessage,
}

/// The probes emitted so far along one root-to-node path, each followed by
/// the feedback it produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub system_preamble: String,
    pub turns: Vec<TurnRecord>,
}

impl Default for Transcript {
    fn default() -> Self {
        Transcript {
            system_preamble: PROBE_INSTRUCTIONS_V1.trim_end().to_string(),
            turns: Vec::new(),
        }
    }
}

impl Transcript {
    pub fn extended(&self, turn: TurnRecord) -> Self {
        let mut next = self.clone();
        next.turns.push(turn);
        next
    }
}

pub fn fenced(source: &str) -> String {
    format!("```python\n{source}\n```")
}

pub fn build_probe_prompt(task: &Task, impls: &[&Implementation], transcript: &Transcript) -> String {
    build_probe_prompt_capped(task, impls, transcript, None).0
}

/// Like [`build_probe_prompt`], keeping only the newest `max_turns` turns.
/// Returns whether older turns were dropped.
pub fn build_probe_prompt_capped(
    task: &Task,
    impls: &[&Implementation],
    transcript: &Transcript,
    max_turns: Option<usize>,
) -> (String, bool) {
    let mut out = String::new();
    out.push_str(&transcript.system_preamble);
    out.push_str("\n\n# Task\n\n");
    out.push_str(task.description.trim_end());
    out.push_str(&format!("\n\nTarget function: {}\n", task.target_function));
    if !task.signature_text.trim().is_empty() {
        out.push_str(&format!("Signature: {}\n", task.signature_text.trim()));
    }
    out.push_str("\n# Implementations");
    for (i, imp) in impls.iter().enumerate() {
        out.push_str(&format!("\n\n## Version {}\n{}", i + 1, fenced(imp.source.trim_end())));
    }

    let skip = match max_turns {
        Some(cap) if transcript.turns.len() > cap => transcript.turns.len() - cap,
        _ => 0,
    };
    if !transcript.turns.is_empty() {
        out.push_str("\n\n# Previous attempts");
        if skip > 0 {
            out.push_str(&format!("\n\n({skip} earlier attempt(s) omitted)"));
        }
        for (i, turn) in transcript.turns.iter().enumerate().skip(skip) {
            out.push_str(&format!(
                "\n\n## Attempt {}\n{}\n\n### Feedback\n\n{}",
                i + 1,
                fenced(&turn.probe_source),
                turn.feedback.render()
            ));
        }
    }
    (out, skip > 0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub source: String,
    /// Model text preceding the chosen code block.
    pub rationale: String,
}

/// Extracts the last fenced code block that defines `create_fn_inputs`.
pub fn parse_probe_response(raw: &str) -> Result<ProbeResponse> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut best: Option<(usize, String)> = None;
    let mut i = 0;
    while i < lines.len() {
        if !lines[i].trim_start().starts_with("```") {
            i += 1;
            continue;
        }
        let open = i;
        let mut j = i + 1;
        while j < lines.len() && !lines[j].trim_start().starts_with("```") {
            j += 1;
        }
        let body = lines[open + 1..j.min(lines.len())].join("\n");
        if defines_function(&body, GENERATOR_NAME) {
            best = Some((open, body));
        }
        i = j + 1;
    }
    let (open, source) = best.ok_or(Error::ParseFailure)?;
    Ok(ProbeResponse {
        source,
        rationale: lines[..open].join("\n").trim().to_string(),
    })
}

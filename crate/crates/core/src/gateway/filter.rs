// SPDX-License-Identifier: Apache-2.0

//! Prompt and response protocol for the spurious-difference judge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FILTER_TEMPLATE: &str = include_str!("../../assets/filter_prompt.txt");

const SLOTS: [&str; 4] = [
    "{query.problem_definition}",
    "{query.inputs}",
    "{query.output_1}",
    "{query.output_2}",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeVerdict {
    Important,
    Irrelevant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub verdict: JudgeVerdict,
    pub rationale: String,
}

/// Fills the judge template. Values are substituted verbatim in a single
/// pass, so slot markers inside a value are left alone.
pub fn build_filter_prompt(
    problem_definition: &str,
    inputs: &str,
    output_a: &str,
    output_b: &str,
) -> Result<String> {
    let values = [problem_definition, inputs, output_a, output_b];
    if let Some(i) = values.iter().position(|v| v.is_empty()) {
        return Err(Error::contract(format!("filter slot {} is empty", SLOTS[i])));
    }
    let mut out = String::with_capacity(FILTER_TEMPLATE.len() + values.iter().map(|v| v.len()).sum::<usize>());
    let mut rest = FILTER_TEMPLATE;
    loop {
        let next = SLOTS
            .iter()
            .enumerate()
            .filter_map(|(i, s)| rest.find(s).map(|pos| (pos, i)))
            .min();
        match next {
            Some((pos, i)) => {
                out.push_str(&rest[..pos]);
                out.push_str(values[i]);
                rest = &rest[pos + SLOTS[i].len()..];
            }
            None => {
                out.push_str(rest);
                break;
            }
        }
    }
    Ok(out)
}

/// Strips markdown decoration models like to put around protocol keywords.
fn strip_decoration(line: &str) -> &str {
    line.trim().trim_start_matches(['*', '#', '>', '-', '_', '`', ' '])
}

/// Value after `field` (matched case-insensitively) on a decorated line.
fn field_value<'a>(line: &'a str, field: &str) -> Option<&'a str> {
    let line = strip_decoration(line);
    let head = line.get(..field.len())?;
    head.eq_ignore_ascii_case(field)
        .then(|| line[field.len()..].trim_start_matches(['*', '_']).trim())
}

/// Reads the last `DIFFERENCES:` and `RATIONALE:` lines of a judge response.
pub fn parse_filter_response(raw: &str) -> Result<FilterDecision> {
    let decision = raw
        .lines()
        .rev()
        .find_map(|l| field_value(l, "DIFFERENCES:"))
        .ok_or_else(|| Error::FilterParseFailure("no DIFFERENCES line".to_string()))?;
    let upper = decision.to_uppercase();
    let verdict = match (upper.contains("IMPORTANT"), upper.contains("IRRELEVANT")) {
        (true, false) => JudgeVerdict::Important,
        (false, true) => JudgeVerdict::Irrelevant,
        (true, true) => {
            return Err(Error::FilterParseFailure(
                "DIFFERENCES line names both decisions".to_string(),
            ))
        }
        (false, false) => {
            return Err(Error::FilterParseFailure(format!(
                "DIFFERENCES line has no decision: {decision:?}"
            )))
        }
    };
    let rationale = raw
        .lines()
        .rev()
        .find_map(|l| field_value(l, "RATIONALE:"))
        .map(|r| r.trim_matches(['"', '\'', '*']).trim().to_string())
        .unwrap_or_default();
    Ok(FilterDecision { verdict, rationale })
}

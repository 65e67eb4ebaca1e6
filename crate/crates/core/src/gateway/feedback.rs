// SPDX-License-Identifier: Apache-2.0

//! Execution feedback shown to the model after each probe.
//!
//! The rendered text is plain, with one line per generated input:
//!
//! ```text
//! Differentiating inputs found!
//!
//! ## Differentiating inputs
//! For input count_string('ΣΣΣΣ', 'ΣΣ') the outputs were different: 3 vs. 1
//!
//! ## Non-differentiating inputs
//! - For input count_string('aAaA', 'aa') the outputs were equal: 3
//! ```

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::harness::{InputOutcome, OutcomeReport};

pub const GENERATOR_NAME: &str = "create_fn_inputs";
pub const TRY_AGAIN: &str = "Try again to generate different inputs.";
pub const DIFFERENTIATING_HEADER: &str = "Differentiating inputs found!";
pub const ALL_EQUAL_HEADER: &str = "All outputs equivalent: True";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    AllEqual,
    DifferentiatingFound,
    ExecutionError,
    InvalidInputs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    Compared,
    /// Rejected by the type check, never executed.
    Invalid,
    /// Outputs differ but the judge deemed the difference irrelevant.
    Spurious,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackLine {
    /// Call display, e.g. `count_string('aAaA', 'aa')`.
    pub input: String,
    pub outputs: Vec<String>,
    pub equal: bool,
    pub status: LineStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub kind: FeedbackKind,
    pub target_function: String,
    pub per_input_lines: Vec<FeedbackLine>,
    pub diagnostic: Option<String>,
    pub trailer: String,
}

impl FeedbackMessage {
    /// Builds the feedback for one executed probe. Inputs listed in
    /// `spurious` (by `input_repr`) are reported as non-differentiating.
    pub fn from_report(
        target_function: &str,
        report: &OutcomeReport,
        spurious: &HashSet<String>,
    ) -> Self {
        let lines: Vec<FeedbackLine> = report
            .per_input
            .iter()
            .map(|inp| line_for(target_function, inp, spurious))
            .collect();

        let any_diff = lines.iter().any(|l| !l.equal);
        let any_valid = lines.iter().any(|l| l.status != LineStatus::Invalid);
        let (kind, diagnostic) = if any_diff {
            (FeedbackKind::DifferentiatingFound, None)
        } else if let Some(err) = &report.probe_error {
            (FeedbackKind::ExecutionError, Some(err.clone()))
        } else if lines.is_empty() {
            (
                FeedbackKind::ExecutionError,
                Some(format!("{GENERATOR_NAME}() yielded no inputs.")),
            )
        } else if !any_valid {
            (FeedbackKind::InvalidInputs, None)
        } else {
            (FeedbackKind::AllEqual, None)
        };
        Self::assemble(kind, target_function, lines, diagnostic)
    }

    /// Feedback for a node whose probe could not be produced or executed.
    pub fn execution_error(target_function: &str, diagnostic: impl Into<String>) -> Self {
        Self::assemble(
            FeedbackKind::ExecutionError,
            target_function,
            Vec::new(),
            Some(diagnostic.into()),
        )
    }

    fn assemble(
        kind: FeedbackKind,
        target_function: &str,
        per_input_lines: Vec<FeedbackLine>,
        diagnostic: Option<String>,
    ) -> Self {
        let trailer = match kind {
            FeedbackKind::AllEqual => TRY_AGAIN.to_string(),
            FeedbackKind::DifferentiatingFound => String::new(),
            FeedbackKind::ExecutionError => {
                "Fix the error and try again to generate different inputs.".to_string()
            }
            FeedbackKind::InvalidInputs => {
                "Try again to generate inputs that respect the type annotations.".to_string()
            }
        };
        FeedbackMessage {
            kind,
            target_function: target_function.to_string(),
            per_input_lines,
            diagnostic,
            trailer,
        }
    }

    pub fn render(&self) -> String {
        let target = &self.target_function;
        let mut sections: Vec<String> = Vec::new();
        let invalid: Vec<&FeedbackLine> = self
            .per_input_lines
            .iter()
            .filter(|l| l.status == LineStatus::Invalid)
            .collect();
        let compared_equal: Vec<&FeedbackLine> = self
            .per_input_lines
            .iter()
            .filter(|l| l.equal && l.status != LineStatus::Invalid)
            .collect();

        match self.kind {
            FeedbackKind::AllEqual => {
                sections.push(format!(
                    "All inputs generated from {GENERATOR_NAME}() yielded the same behavior for target function {target}:"
                ));
                sections.push(ALL_EQUAL_HEADER.to_string());
                sections.push(bullets(&compared_equal));
            }
            FeedbackKind::DifferentiatingFound => {
                sections.push(DIFFERENTIATING_HEADER.to_string());
                let diff: Vec<String> = self
                    .per_input_lines
                    .iter()
                    .filter(|l| !l.equal)
                    .map(render_line)
                    .collect();
                sections.push(format!("## Differentiating inputs\n{}", diff.join("\n")));
                if !compared_equal.is_empty() {
                    sections.push(format!(
                        "## Non-differentiating inputs\n{}",
                        bullets(&compared_equal)
                    ));
                }
            }
            FeedbackKind::ExecutionError => {
                sections.push(format!(
                    "Running {GENERATOR_NAME}() for target function {target} failed:"
                ));
                sections.push(self.diagnostic.clone().unwrap_or_default());
            }
            FeedbackKind::InvalidInputs => {
                sections.push(format!(
                    "None of the inputs generated from {GENERATOR_NAME}() match the type annotations of target function {target}, so nothing was executed."
                ));
            }
        }
        if !invalid.is_empty() {
            let heading = match self.kind {
                FeedbackKind::InvalidInputs => "## Rejected inputs",
                _ => "## Invalid inputs (rejected by the type annotations, not executed)",
            };
            sections.push(format!("{heading}\n{}", bullets(&invalid)));
        }
        if !self.trailer.is_empty() {
            sections.push(self.trailer.clone());
        }
        sections.join("\n\n")
    }
}

fn line_for(target: &str, inp: &InputOutcome, spurious: &HashSet<String>) -> FeedbackLine {
    let input = format!("{target}({})", inp.input_repr);
    if !inp.valid {
        return FeedbackLine {
            input,
            outputs: Vec::new(),
            equal: true,
            status: LineStatus::Invalid,
        };
    }
    let outputs = inp.output_displays();
    if inp.is_differentiating() {
        if spurious.contains(&inp.input_repr) {
            FeedbackLine {
                input,
                outputs,
                equal: true,
                status: LineStatus::Spurious,
            }
        } else {
            FeedbackLine {
                input,
                outputs,
                equal: false,
                status: LineStatus::Compared,
            }
        }
    } else {
        FeedbackLine {
            input,
            outputs,
            equal: true,
            status: LineStatus::Compared,
        }
    }
}

fn render_line(line: &FeedbackLine) -> String {
    match (line.status, line.equal) {
        (LineStatus::Invalid, _) => format!(
            "For input {} the arguments do not match the type annotations",
            line.input
        ),
        (LineStatus::Spurious, _) => format!(
            "For input {} the outputs differed only in ways that do not matter for the task: {}",
            line.input,
            line.outputs.join(" vs. ")
        ),
        (LineStatus::Compared, true) => format!(
            "For input {} the outputs were equal: {}",
            line.input,
            line.outputs.first().map(String::as_str).unwrap_or("")
        ),
        (LineStatus::Compared, false) => format!(
            "For input {} the outputs were different: {}",
            line.input,
            line.outputs.join(" vs. ")
        ),
    }
}

fn bullets(lines: &[&FeedbackLine]) -> String {
    lines
        .iter()
        .map(|l| format!("- {}", render_line(l)))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CanonicalValue as V;

    fn pair(repr: &str, a: V, b: V) -> InputOutcome {
        InputOutcome::from_outcomes(repr, vec![a, b])
    }

    #[test]
    fn all_equal_rendering() {
        let report = OutcomeReport::from_inputs(vec![
            pair("'aAaA', 'aa'", V::int(3), V::int(3)),
            pair("'abc', 'a'", V::exception("ValueError('x')"), V::exception("ValueError('y')")),
        ]);
        let fb = FeedbackMessage::from_report("count_string", &report, &HashSet::new());
        assert_eq!(fb.kind, FeedbackKind::AllEqual);
        assert_eq!(
            fb.render(),
            "All inputs generated from create_fn_inputs() yielded the same behavior for target function count_string:\n\
             \n\
             All outputs equivalent: True\n\
             \n\
             - For input count_string('aAaA', 'aa') the outputs were equal: 3\n\
             - For input count_string('abc', 'a') the outputs were equal: ValueError('x')\n\
             \n\
             Try again to generate different inputs."
        );
    }

    #[test]
    fn differentiating_rendering_without_equal_section() {
        let report = OutcomeReport::from_inputs(vec![pair("1", V::int(1), V::int(2))]);
        let fb = FeedbackMessage::from_report("f", &report, &HashSet::new());
        assert_eq!(
            fb.render(),
            "Differentiating inputs found!\n\n## Differentiating inputs\nFor input f(1) the outputs were different: 1 vs. 2"
        );
    }

    #[test]
    fn spurious_inputs_count_as_equal() {
        let report = OutcomeReport::from_inputs(vec![pair(
            "[1, 2]",
            V::list(vec![V::int(3), V::int(4)]),
            V::list(vec![V::int(4), V::int(3)]),
        )]);
        let spurious: HashSet<String> = ["[1, 2]".to_string()].into();
        let fb = FeedbackMessage::from_report("f", &report, &spurious);
        assert_eq!(fb.kind, FeedbackKind::AllEqual);
        assert!(!fb.render().contains(DIFFERENTIATING_HEADER));
        assert!(fb.render().contains("[3, 4] vs. [4, 3]"));
    }

    #[test]
    fn invalid_and_error_kinds() {
        let report = OutcomeReport::from_inputs(vec![InputOutcome::invalid("3.5")]);
        let fb = FeedbackMessage::from_report("f", &report, &HashSet::new());
        assert_eq!(fb.kind, FeedbackKind::InvalidInputs);
        assert!(fb.render().contains("- For input f(3.5) the arguments do not match"));

        let mixed = OutcomeReport::from_inputs(vec![
            InputOutcome::invalid("3.5"),
            pair("3", V::int(1), V::int(1)),
        ]);
        let fb = FeedbackMessage::from_report("f", &mixed, &HashSet::new());
        assert_eq!(fb.kind, FeedbackKind::AllEqual);
        assert!(fb.render().contains("## Invalid inputs"));

        let err = OutcomeReport::probe_failure("NameError: name 'x' is not defined");
        let fb = FeedbackMessage::from_report("f", &err, &HashSet::new());
        assert_eq!(fb.kind, FeedbackKind::ExecutionError);
        assert!(fb.render().contains("NameError"));

        let empty = OutcomeReport::from_inputs(vec![]);
        let fb = FeedbackMessage::from_report("f", &empty, &HashSet::new());
        assert_eq!(fb.kind, FeedbackKind::ExecutionError);
    }

    #[test]
    fn kind_matches_line_flags() {
        let report = OutcomeReport::from_inputs(vec![
            pair("1", V::int(1), V::int(2)),
            pair("2", V::int(2), V::int(2)),
        ]);
        let fb = FeedbackMessage::from_report("f", &report, &HashSet::new());
        assert_eq!(
            fb.kind == FeedbackKind::DifferentiatingFound,
            fb.per_input_lines.iter().any(|l| !l.equal)
        );
    }
}

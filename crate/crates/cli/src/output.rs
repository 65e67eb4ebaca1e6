// SPDX-License-Identifier: Apache-2.0

//! Report emission. `report.json` is a pure function of the inputs and the
//! run configuration; wall-clock data goes to `metadata.json`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Serialize)]
struct Report<'a, B: Serialize> {
    command: &'a str,
    run_config: &'a RunConfig,
    #[serde(flatten)]
    body: &'a B,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    tool_version: &'a str,
    started_at: String,
    finished_at: String,
    elapsed_ms: i64,
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes `report.json` and `metadata.json` under the configured output
/// directory and returns the report path.
pub fn emit<B: Serialize>(
    command: &str,
    config: &RunConfig,
    body: &B,
    started: DateTime<Utc>,
) -> CliResult<PathBuf> {
    ensure_dir(&config.out)?;
    let report_path = config.out.join(REPORT_FILE);
    write_json(
        &report_path,
        &Report {
            command,
            run_config: config,
            body,
        },
    )?;
    let finished = Utc::now();
    write_json(
        &config.out.join(METADATA_FILE),
        &Metadata {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            started_at: started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: finished.to_rfc3339_opts(SecondsFormat::Millis, true),
            elapsed_ms: (finished - started).num_milliseconds(),
        },
    )?;
    Ok(report_path)
}

/// File-name-safe rendering of an id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

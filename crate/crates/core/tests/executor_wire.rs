// SPDX-License-Identifier: Apache-2.0

//! The child-process side of the harness protocol, exercised with small
//! shell scripts standing in for the real harness.

use std::path::Path;
use std::time::{Duration, Instant};

use probegen::harness::{CanonicalValue, Executor, Job, Limits, SubprocessExecutor};
use probegen::Error;

fn script(dir: &Path, name: &str, body: &str) -> SubprocessExecutor {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    SubprocessExecutor::new("sh", vec![path.to_string_lossy().into_owned()])
}

fn job(wall_seconds: f64) -> Job {
    Job {
        target_function: "count_string".into(),
        implementations: vec!["def count_string(t, s): ...".into(), "def count_string(t, s): pass".into()],
        probe_source: "def create_fn_inputs():\n    yield {\"args\": (\"ΣΣΣΣ\", \"ΣΣ\"), \"kwargs\": {}}".into(),
        limits: Limits {
            wall_seconds,
            ..Limits::default()
        },
    }
}

const REPORT: &str = r#"{"per_input":[
  {"input_repr":"'ΣΣΣΣ', 'ΣΣ'","valid":true,
   "outcomes":[{"t":"num","v":3},{"t":"num","v":1}],
   "pairwise_equal":[[true,false],[false,true]]},
  {"input_repr":"'abc', 'a'","valid":true,
   "outcomes":[{"t":"exc","v":"ValueError('short')"},{"t":"exc","v":"ValueError('too short')"}],
   "pairwise_equal":[[true,true],[true,true]]},
  {"input_repr":"3.5","valid":false,"outcomes":[],"pairwise_equal":[]},
  {"input_repr":"'x' * 2000, 'xx'","valid":true,
   "outcomes":[{"t":"list","v":[{"t":"num","v":"nan"}],"trunc":true},{"t":"list","v":[{"t":"num","v":"nan"}],"trunc":true}],
   "pairwise_equal":[[true,true],[true,true]]}
 ],"probe_error":null,"any_differentiating":true}"#;

#[test]
fn job_goes_to_stdin_and_report_comes_back() {
    let dir = tempfile::tempdir().unwrap();
    let captured = dir.path().join("job.json");
    let exec = script(
        dir.path(),
        "echo.sh",
        &format!(
            "cat > '{}'\ncat <<'JSON'\n{REPORT}\nJSON\necho 'diagnostics go here' >&2",
            captured.display()
        ),
    );
    let report = exec.execute(&job(10.0)).unwrap();

    let sent: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&captured).unwrap()).unwrap();
    assert_eq!(sent["target_function"], "count_string");
    assert_eq!(sent["implementations"].as_array().unwrap().len(), 2);
    assert!(sent["probe_source"].as_str().unwrap().contains("ΣΣΣΣ"));
    for key in ["wall_seconds", "memory_bytes", "max_inputs_per_probe", "iterable_truncation_length"] {
        assert!(sent["limits"].get(key).is_some(), "limits.{key} missing");
    }
    assert_eq!(sent["limits"]["iterable_truncation_length"], 1000);

    assert!(report.any_differentiating);
    assert_eq!(report.per_input.len(), 4);
    assert_eq!(report.per_input[0].outcomes, vec![CanonicalValue::int(3), CanonicalValue::int(1)]);
    assert_eq!(report.differentiating_inputs().count(), 1);
    assert!(report.per_input[1].outcomes[0].is_exception());
    assert!(!report.per_input[2].valid);
    assert_eq!(report.per_input[3].outcomes[0].display(), "[nan, ...]");
}

#[test]
fn non_zero_exit_is_a_harness_failure() {
    let dir = tempfile::tempdir().unwrap();
    let exec = script(dir.path(), "fail.sh", "cat > /dev/null\necho 'sandbox unavailable' >&2\nexit 3");
    match exec.execute(&job(10.0)) {
        Err(Error::Harness(msg)) => assert!(msg.contains("sandbox unavailable"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_or_inconsistent_reports_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = script(dir.path(), "garbage.sh", "cat > /dev/null\necho 'not json'");
    assert!(matches!(garbage.execute(&job(10.0)), Err(Error::Harness(_))));

    let asymmetric = r#"{"per_input":[{"input_repr":"1","valid":true,"outcomes":[{"t":"num","v":1},{"t":"num","v":2}],"pairwise_equal":[[true,true],[false,true]]}],"any_differentiating":true}"#;
    let bad = script(dir.path(), "bad.sh", &format!("cat > /dev/null\necho '{asymmetric}'"));
    assert!(bad.execute(&job(10.0)).is_err());

    let wrong_flag = r#"{"per_input":[{"input_repr":"1","valid":true,"outcomes":[{"t":"num","v":1},{"t":"num","v":1}],"pairwise_equal":[[true,true],[true,true]]}],"any_differentiating":true}"#;
    let bad = script(dir.path(), "flag.sh", &format!("cat > /dev/null\necho '{wrong_flag}'"));
    assert!(bad.execute(&job(10.0)).is_err());
}

#[test]
fn runaway_harness_is_killed_after_wall_limit_plus_grace() {
    let dir = tempfile::tempdir().unwrap();
    let exec = script(dir.path(), "bomb.sh", "exec sleep 30").with_grace(Duration::from_secs(1));
    let start = Instant::now();
    let err = exec.execute(&job(0.5)).unwrap_err();
    let took = start.elapsed();
    assert!(matches!(err, Error::Harness(ref m) if m.contains("wall limit")), "{err}");
    assert!(took < Duration::from_millis(2500), "took {took:?}");
    assert!(took >= Duration::from_millis(1400), "killed early after {took:?}");
}

#[test]
fn identical_jobs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let exec = script(dir.path(), "det.sh", &format!("cat > /dev/null\ncat <<'JSON'\n{REPORT}\nJSON"));
    let a = exec.execute(&job(5.0)).unwrap();
    let b = exec.execute(&job(5.0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn missing_program_and_bad_limits() {
    let exec = SubprocessExecutor::new("/nonexistent/harness", vec![]);
    assert!(matches!(exec.execute(&job(1.0)), Err(Error::Harness(_))));
    let exec = SubprocessExecutor::from_command_line("true").unwrap();
    assert!(matches!(exec.execute(&job(0.0)), Err(Error::Contract(_))));
    assert!(SubprocessExecutor::from_command_line("   ").is_err());
}

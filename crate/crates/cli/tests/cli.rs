// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the binary with the scripted provider and a replayed
//! harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use probegen::estimator::RecordedTree;
use probegen::gateway::{ScriptBook, ScriptedProvider};
use probegen::harness::{CanonicalValue, InputOutcome, OutcomeReport};
use probegen::search::SearchNode;
use serde_json::{json, Value};
use tempfile::TempDir;

const EQUAL_PROBE: &str = "def create_fn_inputs():\n    yield {\"args\": (1,), \"kwargs\": {}}";
const DIFF_PROBE: &str = "def create_fn_inputs():\n    yield {\"args\": (-1,), \"kwargs\": {}}";
const QUIRK_PROBE: &str = "def create_fn_inputs():\n    yield {\"args\": (10**9,), \"kwargs\": {}}";
const INVALID_PROBE: &str = "def create_fn_inputs():\n    yield {\"args\": ('x',), \"kwargs\": {}}";
const IMPORTANT: &str = "Outputs differ on a valid input.\nRATIONALE: sign handling\nDIFFERENCES: IMPORTANT";
const IRRELEVANT: &str = "Only an overflow edge.\nRATIONALE: out of range\nDIFFERENCES: IRRELEVANT";

fn turn(probe: &str) -> String {
    format!("Trying one input.\n```python\n{probe}\n```")
}

fn src(body: &str) -> String {
    format!("def f(x: int) -> int:\n    {body}\n")
}

fn imp(id: &str, body: &str, passes: Option<bool>) -> Value {
    json!({"impl_id": id, "source": src(body), "origin": "sampled", "passes_unit_tests": passes})
}

fn record(task_id: &str, gt: Option<&str>, impls: Vec<Value>) -> String {
    json!({
        "task_id": task_id,
        "description": "Return x plus one.",
        "target_function": "f",
        "signature": "def f(x: int) -> int:",
        "ground_truth": gt.map(src),
        "unit_tests": null,
        "implementations": impls,
    })
    .to_string()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Task `t1` planted with one sample per agreement cell, plus an
    /// unrunnable sample, one without unit-test metadata, and a task with no
    /// ground truth. Task `t2` holds a single distinguishable pair.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let lines = [
            record(
                "t1",
                Some("return x + 1"),
                vec![
                    imp("fine", "return 1 + x", Some(true)),
                    imp("buggy", "return abs(x) + 1", Some(true)),
                    imp("quirk", "return min(x, 10**6) + 1", Some(true)),
                    imp("broken", "return x - 1", Some(false)),
                    imp("lucky", "return x + True", Some(false)),
                    imp("weird", "return int(str(x)) + 1", Some(true)),
                    imp("unknown", "return (x + 1)", None),
                    imp("twin", "return x + 1", Some(true)),
                ],
            ),
            record("t2", Some("return x + 1"), vec![
                imp("a", "return x + 1 + 0", Some(true)),
                imp("b", "return abs(x) + 1", Some(false)),
            ]),
            record("t3", None, vec![imp("c", "return x", Some(true))]),
        ];
        fs::write(dir.path().join("data.jsonl"), lines.join("\n") + "\n").unwrap();

        let scoped = |probe: &str, judge: Option<&str>| ScriptBook {
            probe_fallback: Some(turn(probe)),
            judge_fallback: judge.map(str::to_string),
            ..ScriptBook::default()
        };
        let mut provider = ScriptedProvider::default()
            .probe_fallback(turn(EQUAL_PROBE))
            .judge_fallback(IMPORTANT);
        for pair in ["ground_truth|buggy", "ground_truth|broken", "a|b", "ground_truth|b"] {
            provider.scopes.insert(
                pair.to_string(),
                ScriptBook {
                    probes: [("0".to_string(), turn(DIFF_PROBE))].into(),
                    ..ScriptBook::default()
                },
            );
        }
        provider
            .scopes
            .insert("ground_truth|quirk".into(), scoped(QUIRK_PROBE, Some(IRRELEVANT)));
        provider
            .scopes
            .insert("ground_truth|weird".into(), scoped(INVALID_PROBE, None));
        fs::write(
            dir.path().join("script.json"),
            serde_json::to_string_pretty(&provider).unwrap(),
        )
        .unwrap();

        let same = |repr: &str| {
            OutcomeReport::from_inputs(vec![InputOutcome::from_outcomes(
                repr,
                vec![CanonicalValue::int(2), CanonicalValue::int(2)],
            )])
        };
        let differ = |repr: &str, a: i64, b: i64| {
            OutcomeReport::from_inputs(vec![InputOutcome::from_outcomes(
                repr,
                vec![CanonicalValue::int(a), CanonicalValue::int(b)],
            )])
        };
        let harness = json!({
            "reports": [
                {"probe_source": DIFF_PROBE, "report": differ("-1", 0, 2)},
                {"probe_source": QUIRK_PROBE, "report": differ("10**9", 1_000_000_001, 1_000_001)},
                {"probe_source": INVALID_PROBE,
                 "report": OutcomeReport::from_inputs(vec![InputOutcome::invalid("'x'")])},
            ],
            "default": same("1"),
        });
        fs::write(
            dir.path().join("harness.json"),
            serde_json::to_string_pretty(&harness).unwrap(),
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str) -> (Output, PathBuf) {
        let out_dir = self.path(out);
        let output = Command::new(env!("CARGO_BIN_EXE_probegen"))
            .args(args)
            .arg("--out")
            .arg(&out_dir)
            .args(["--provider", "scripted", "--script"])
            .arg(self.path("script.json"))
            .arg("--harness-script")
            .arg(self.path("harness.json"))
            .args(["--parallelism", "3"])
            .env_remove("RUST_LOG")
            .output()
            .unwrap();
        (output, out_dir)
    }

    fn dataset(&self) -> String {
        self.path("data.jsonl").display().to_string()
    }
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn disprove_reports_counterexample_and_exit_code() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(
        &["disprove", "--dataset", &ds, "--task", "t1", "--impl", "ground_truth", "--impl", "buggy"],
        "d1",
    );
    assert_eq!(code(&o), 10, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "disprove");
    assert_eq!(r["summary"]["disproved"], 1);
    let pair = &r["pairs"][0];
    assert_eq!(pair["status"], "disproved");
    assert_eq!(pair["counterexamples"][0]["input_repr"], "-1");
    assert_eq!(pair["counterexamples"][0]["outputs_repr"], json!(["0", "2"]));
    // the first probe differentiates
    assert_eq!(pair["llm_calls_used"], 1);
    assert!(stdout(&o).contains("t1 ground_truth vs buggy: disproved on -1: 0 vs 2"));
    assert!(out.join("metadata.json").exists());
}

#[test]
fn identical_sources_are_not_disproved() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(
        &["disprove", "--dataset", &ds, "--task", "t1", "--impl", "ground_truth", "--impl", "twin"],
        "d2",
    );
    assert_eq!(code(&o), 0);
    let pair = &report(&out)["pairs"][0];
    assert_eq!(pair["status"], "not_disproved");
    assert_eq!(pair["counterexamples"], json!([]));
}

#[test]
fn equal_behavior_is_not_disproved() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(
        &["disprove", "--dataset", &ds, "--task", "t1", "--impl", "ground_truth", "--impl", "fine", "--impl", "weird"],
        "d3",
    );
    assert_eq!(code(&o), 0);
    let r = report(&out);
    let statuses: Vec<&str> = r["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["status"].as_str().unwrap())
        .collect();
    // ground_truth|fine, ground_truth|weird, fine|weird
    assert_eq!(statuses, ["not_disproved", "not_runnable", "not_disproved"]);
    assert_eq!(r["pairs"][0]["llm_calls_used"], 21);
}

#[test]
fn usage_errors_exit_with_two() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, _) = fx.run(&["disprove", "--dataset", &ds, "--task", "t1"], "u1");
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no implementations selected"));
    let (o, _) = fx.run(&["disprove", "--dataset", &ds, "--task", "t1", "--impl", "fine"], "u2");
    assert_eq!(code(&o), 2);
    let (o, _) = fx.run(
        &["disprove", "--dataset", &ds, "--task", "t1", "--impl", "fine", "--impl", "nope"],
        "u3",
    );
    assert_eq!(code(&o), 2);
    let (o, _) = fx.run(&["disprove", "--dataset", &ds, "--impl", "a", "--impl", "b"], "u4");
    assert_eq!(code(&o), 2, "several tasks need --task");
    let (o, _) = fx.run(&["frobnicate"], "u5");
    assert_eq!(code(&o), 2);

    let bare = Command::new(env!("CARGO_BIN_EXE_probegen"))
        .args(["eval-dataset", "--dataset", &ds, "--provider", "scripted"])
        .output()
        .unwrap();
    assert_eq!(code(&bare), 2);
}

#[test]
fn missing_dataset_is_fatal() {
    let fx = Fixture::new();
    let missing = fx.path("missing.jsonl").display().to_string();
    let (o, _) = fx.run(&["eval-dataset", "--dataset", &missing], "f1");
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_dataset_matches_hand_tally() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(&["eval-dataset", "--dataset", &ds], "e1");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["tasks_evaluated"], 2);
    assert_eq!(r["skipped"], json!([{"task_id": "t3", "reason": "no ground truth"}]));

    let status = |id: &str| {
        r["samples"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["impl_id"] == id)
            .map(|s| s["report"]["status"].as_str().unwrap().to_string())
            .unwrap()
    };
    assert_eq!(status("buggy"), "disproved");
    assert_eq!(status("broken"), "disproved");
    assert_eq!(status("quirk"), "not_disproved");
    assert_eq!(status("weird"), "not_runnable");
    assert_eq!(status("twin"), "not_disproved");

    let table = |left: &str, right: &str| {
        r["agreement"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["left"] == left && t["right"] == right)
            .unwrap()
            .clone()
    };
    let counts = |t: &Value| {
        let c = &t["counts"];
        [&c["pass_pass"], &c["pass_fail"], &c["fail_pass"], &c["fail_fail"]]
            .map(|v| v.as_u64().unwrap())
    };
    // samples: t1 x 8 plus t2 x 2; mutually runnable drops weird and unknown
    let unit = table("unit_tests", "probegen");
    assert_eq!(unit["samples"], 10);
    assert_eq!(unit["mutually_runnable"], 8);
    // (pass,pass) fine quirk twin a; (pass,fail) buggy; (fail,pass) lucky;
    // (fail,fail) broken b
    assert_eq!(counts(&unit), [4, 1, 1, 2]);
    let nf = table("unit_tests", "probegen_no_filter");
    assert_eq!(counts(&nf), [3, 2, 1, 2]);
    let pf = table("probegen", "probegen_no_filter");
    assert_eq!(pf["mutually_runnable"], 9);
    assert_eq!(counts(&pf), [5, 1, 0, 3]);

    for t in r["agreement"].as_array().unwrap() {
        let p = &t["percent"];
        let sum: f64 = ["pass_pass", "pass_fail", "fail_pass", "fail_fail"]
            .iter()
            .map(|k| p[k].as_f64().unwrap())
            .sum();
        assert!((sum - 100.0).abs() < 1e-9);
        let c: u64 = counts(t).iter().sum();
        assert_eq!(c, t["mutually_runnable"].as_u64().unwrap());
    }
    assert!(stdout(&o).contains("unit_tests vs probegen:"));
}

#[test]
fn runs_are_byte_identical() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let args = ["eval-dataset", "--dataset", ds.as_str()];
    let (_, out) = fx.run(&args, "rep");
    let first = fs::read(out.join("report.json")).unwrap();
    let meta_first = fs::read_to_string(out.join("metadata.json")).unwrap();
    let (_, out) = fx.run(&args, "rep");
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());
    let meta: Value = serde_json::from_str(&meta_first).unwrap();
    assert!(meta["started_at"].is_string() && meta["finished_at"].is_string());

    let cluster = ["cluster", "--dataset", ds.as_str(), "--task", "t2", "--seed", "5"];
    let (_, out) = fx.run(&cluster, "rep_c");
    let first = fs::read(out.join("report.json")).unwrap();
    let (_, out) = fx.run(&cluster, "rep_c");
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());
}

#[test]
fn report_carries_run_config() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (_, out) = fx.run(
        &["disprove", "--dataset", &ds, "--task", "t2", "--impl", "a", "--impl", "b", "--no-filter", "--seed", "9"],
        "rc",
    );
    let cfg = &report(&out)["run_config"];
    assert_eq!(cfg["strategy"], json!({"kind": "decreasing", "K": 3, "D": 4}));
    assert_eq!(cfg["effective_budget"], 21);
    assert_eq!(cfg["filter"], false);
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["judge_temperature"], 0.0);
    assert_eq!(cfg["provider"], "scripted");
    assert_eq!(cfg["parallelism"], 3);
    assert_eq!(cfg["harness"]["kind"], "scripted");
}

#[test]
fn cluster_with_zero_searches_keeps_one_cluster() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(&["cluster", "--dataset", &ds, "--task", "t1", "--np", "0"], "c0");
    assert_eq!(code(&o), 0);
    let t = &report(&out)["tasks"][0];
    assert_eq!(t["partition"]["clusters"].as_array().unwrap().len(), 1);
    assert_eq!(t["partition"]["clusters"][0].as_array().unwrap().len(), 8);
    assert_eq!(t["partition"]["probed_pairs"], json!([]));
    assert_eq!(t["searches"], json!([]));
}

#[test]
fn cluster_then_ssc() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(&["cluster", "--dataset", &ds, "--task", "t2"], "c1");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let t = &r["tasks"][0];
    assert_eq!(r["np"], 10);
    assert_eq!(t["partition"]["clusters"], json!([["a"], ["b"]]));
    assert_eq!(t["partition"]["probed_pairs"], json!([["a", "b"]]));
    assert_eq!(t["partition"]["evidence"][0]["input_repr"], "-1");
    assert_eq!(t["searches"].as_array().unwrap().len(), 1);

    let part = out.join("report.json").display().to_string();
    let (o, out) = fx.run(&["ssc", "--dataset", &ds, "--partition", &part], "s1");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    // two singleton clusters tie: mean of 1 and 0
    assert_eq!(r["tasks"][0]["pass_at_1"], 0.5);
    assert_eq!(r["tasks"][0]["random_pass_at_1"], 0.5);
    assert_eq!(r["tie_mode"], "cluster_mean");
}

/// Complete K=3, D=4 tree whose only success sits at `path`.
fn full_tree(path: &[u64]) -> RecordedTree {
    fn grow(node: &mut SearchNode, path: &[u64], on_path: bool) {
        if node.depth == 4 {
            return;
        }
        for i in 0..3 {
            let mut c = SearchNode::new(node.child_id(i), node.depth + 1);
            let here = on_path && path.get(node.depth as usize) == Some(&i);
            if here && c.depth as usize == path.len() {
                c.success = true;
            } else {
                grow(&mut c, path, here);
            }
            node.children.push(c);
        }
    }
    let mut root = SearchNode::root();
    grow(&mut root, path, true);
    RecordedTree::new(root, 3, 4).unwrap()
}

#[test]
fn tune_strategy_grid() {
    let fx = Fixture::new();
    let trees = fx.path("trees");
    fs::create_dir(&trees).unwrap();
    for (i, p) in [&[0u64][..], &[2, 1], &[1, 1, 1, 2], &[]].iter().enumerate() {
        let t = full_tree(p);
        fs::write(trees.join(format!("t{i}.json")), serde_json::to_string(&t).unwrap()).unwrap();
    }
    let trees_arg = trees.display().to_string();
    let (o, out) = fx.run(
        &["tune-strategy", "--trees", &trees_arg, "--k-range", "1-3", "--d-range", "1-4"],
        "g1",
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["trees"], 4);
    let grid = r["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 6 * 3 * 4);
    let dec = grid
        .iter()
        .find(|g| g["kind"] == "decreasing" && g["K"] == 3 && g["D"] == 4)
        .unwrap();
    assert_eq!(dec["cost"], 21);
    assert_eq!(dec["feasible"], true);
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 3 * 4);
    assert!(csv.starts_with("kind,K,D,cost,sigma,feasible,on_pareto_front\n"));
    assert!(csv.lines().any(|l| l.starts_with("decreasing,3,4,21,")));

    // front: strictly increasing cost and sigma, every point feasible
    let front = r["pareto_front"].as_array().unwrap();
    assert!(!front.is_empty());
    for w in front.windows(2) {
        assert!(w[0]["cost"].as_u64() < w[1]["cost"].as_u64());
        assert!(w[0]["sigma"].as_f64() < w[1]["sigma"].as_f64());
    }

    let (o, _) = fx.run(&["tune-strategy", "--trees", &trees_arg, "--k-range", "3-1"], "g2");
    assert_eq!(code(&o), 2);
}

#[test]
fn recorded_trees_feed_the_tuner() {
    let fx = Fixture::new();
    let ds = fx.dataset();
    let (o, out) = fx.run(
        &["record-trees", "--dataset", &ds, "--k-max", "2", "--d-max", "2"],
        "rt",
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let files = r["trees"].as_array().unwrap();
    assert_eq!(files.len(), 10);
    let buggy = files.iter().find(|f| f["impl_b"] == "buggy").unwrap();
    assert_eq!(buggy["any_success"], true);
    let fine = files.iter().find(|f| f["impl_b"] == "fine").unwrap();
    assert_eq!(fine["nodes"], 6);
    assert_eq!(fine["any_success"], false);

    let trees = out.join("trees").display().to_string();
    let (o, out) = fx.run(
        &["tune-strategy", "--trees", &trees, "--kinds", "full,top", "--k-range", "1-2", "--d-range", "1-2"],
        "rt_tune",
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["grid"].as_array().unwrap().len(), 8);
}

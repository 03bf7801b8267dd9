use std::path::Path;

use logless_reconfig_cli::{run, EXIT_ERROR, EXIT_FINDING, EXIT_OK};
use proptest::prelude::*;
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("logless-reconfig").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut with = vec!["--json"];
    with.extend_from_slice(args);
    let o = cli(&with);
    (
        o.code,
        serde_json::from_str(&o.stdout).unwrap_or(Value::Null),
    )
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explore_all_hold_exits_zero_with_envelope() {
    let args = [
        "explore",
        "--servers",
        "2",
        "--max-term",
        "2",
        "--max-log-len",
        "1",
        "--max-config-version",
        "2",
    ];
    let (code, v) = json(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["command"], "explore");
    assert_eq!(v["params"]["servers"], 2);
    assert_eq!(v["params"]["mode"], "full");
    assert_eq!(v["params"]["invariants"].as_array().unwrap().len(), 18);
    assert_eq!(v["result"]["verdict"], "all-hold");
    let human = cli(&args);
    assert!(human.stdout.contains("verdict: all-hold"));
}

#[test]
fn explore_is_deterministic() {
    let args = [
        "explore",
        "--mode",
        "logless",
        "--servers",
        "3",
        "--max-term",
        "2",
        "--max-config-version",
        "3",
        "--symmetry",
    ];
    assert_eq!(json(&args), json(&args));
}

#[test]
fn presets_resolve_and_flags_override_them() {
    let (code, v) = json(&[
        "explore",
        "--preset",
        "fig2b",
        "--max-term",
        "1",
        "--max-config-version",
        "2",
    ]);
    assert_eq!(code, EXIT_OK);
    let p = &v["params"];
    assert_eq!(p["mode"], "logless");
    assert_eq!(p["servers"], 5);
    assert_eq!(p["max_term"], 1);
    assert_eq!(p["symmetry"], true);
    assert_eq!(p["invariants"], serde_json::json!(["election-safety"]));
}

#[test]
fn mutation_is_a_finding_with_a_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("cex.json");
    let o = cli(&[
        "explore",
        "--servers",
        "3",
        "--max-term",
        "1",
        "--max-config-version",
        "3",
        "--symmetry",
        "--mutate",
        "drop-q1",
        "--trace-out",
        path(&trace),
    ]);
    assert_eq!(o.code, EXIT_FINDING, "{}", o.stderr);
    assert!(o.stdout.contains("violated: active-configs-overlap"));
    assert_eq!(
        cli(&["replay", path(&trace), "--mutate", "drop-q1"]).code,
        EXIT_OK
    );
    assert_eq!(cli(&["replay", path(&trace)]).code, EXIT_FINDING);
    let (_, v) = json(&["replay", path(&trace)]);
    assert_eq!(v["result"]["outcome"], "invalid-at-step");
}

#[test]
fn unknown_mutation_and_invariant_are_usage_errors() {
    let o = cli(&[
        "explore",
        "--servers",
        "2",
        "--max-term",
        "1",
        "--max-config-version",
        "1",
        "--mutate",
        "drop-everything",
    ]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("--mutate"));
    let o = cli(&[
        "explore",
        "--servers",
        "2",
        "--max-term",
        "1",
        "--max-config-version",
        "1",
        "--invariants",
        "no-such",
    ]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("--invariants"));
    let o = cli(&[
        "explore",
        "--servers",
        "40",
        "--max-term",
        "1",
        "--max-config-version",
        "1",
    ]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("--servers"));
}

#[test]
fn oversized_bounds_are_domain_errors() {
    let o = cli(&[
        "explore",
        "--servers",
        "9",
        "--max-term",
        "9",
        "--max-log-len",
        "9",
        "--max-config-version",
        "9",
    ]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("128"), "{}", o.stderr);
}

#[test]
fn replay_and_refine_missing_or_malformed_files() {
    assert_eq!(cli(&["replay", "nonexistent.json"]).code, EXIT_ERROR);
    assert_eq!(cli(&["refine", "nonexistent.json"]).code, EXIT_ERROR);
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{\"init\": 3}").unwrap();
    let o = cli(&["replay", path(&junk)]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("not a trace"));
}

#[test]
fn simulate_trace_replays_and_refines() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, log) = (dir.path().join("t.json"), dir.path().join("log.jsonl"));
    let (code, v) = json(&[
        "simulate",
        "--seed",
        "5",
        "--servers",
        "4",
        "--duration-ms",
        "3000",
        "--write-period-ms",
        "25",
        "--random-reconfig-ms",
        "300",
        "--random-faults",
        "--trace-out",
        path(&trace),
        "--out",
        path(&log),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["result"]["verdict"], "all-hold");
    assert_eq!(v["result"]["acknowledged_writes_durable"], true);
    assert!(v["result"]["stats"]["writes_committed"].as_u64().unwrap() > 0);
    let lines = std::fs::read_to_string(&log).unwrap();
    assert!(lines
        .lines()
        .all(|l| serde_json::from_str::<Value>(l).is_ok()));
    assert_eq!(cli(&["replay", path(&trace)]).code, EXIT_OK);
    assert_eq!(cli(&["refine", path(&trace)]).code, EXIT_OK);
}

#[test]
fn simulate_reads_a_fault_file() {
    let dir = tempfile::tempdir().unwrap();
    let faults = dir.path().join("faults.json");
    let schedule = r#"{"faults": [{"start_ms": 1000, "end_ms": 2000, "target": {"servers": ["n1", "n2"]}, "kind": "pause-node"}]}"#;
    std::fs::write(&faults, schedule).unwrap();
    let (code, v) = json(&[
        "simulate",
        "--duration-ms",
        "3000",
        "--faults",
        path(&faults),
        "--write-period-ms",
        "20",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["params"]["faults"]["faults"][0]["kind"], "pause-node");
    std::fs::write(
        &faults,
        r#"{"faults": [{"start_ms": 9, "end_ms": 1, "target": "primary", "kind": "pause-node"}]}"#,
    )
    .unwrap();
    assert_eq!(
        cli(&["simulate", "--faults", path(&faults)]).code,
        EXIT_ERROR
    );
    std::fs::write(&faults, "not json").unwrap();
    let o = cli(&["simulate", "--faults", path(&faults)]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("--faults"));
    assert_eq!(cli(&["simulate", "--servers", "0"]).code, EXIT_ERROR);
}

#[test]
fn refine_rejects_a_broken_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    assert_eq!(
        cli(&[
            "simulate",
            "--seed",
            "1",
            "--duration-ms",
            "1500",
            "--write-period-ms",
            "20",
            "--trace-out",
            path(&trace)
        ])
        .code,
        EXIT_OK
    );
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    // drop the election so later steps lose their guards
    let steps = v["steps"].as_array_mut().unwrap();
    let k = steps
        .iter()
        .position(|s| s["kind"] == "BecomeLeader")
        .unwrap();
    steps.remove(k);
    std::fs::write(&trace, v.to_string()).unwrap();
    let (code, v) = json(&["refine", path(&trace)]);
    assert_eq!(code, EXIT_FINDING);
    assert_eq!(v["result"]["outcome"], "fails-at-step");
}

#[test]
fn experiment_writes_csv_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, phases, stats) = (
        dir.path().join("l.csv"),
        dir.path().join("p.csv"),
        dir.path().join("s.json"),
    );
    let args = [
        "experiment",
        "--backend",
        "logless",
        "--seed",
        "2",
        "--total-ms",
        "10000",
        "--out",
        path(&csv),
        "--phases-out",
        path(&phases),
        "--stats-out",
        path(&stats),
    ];
    let (code, v) = json(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["params"]["backend"], "logless");
    assert_eq!(v["result"]["safe"], true);
    assert_eq!(v["result"]["phases_recovered"], 1);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("issued_at_ms,latency_ms,outcome"));
    assert_eq!(
        std::fs::read_to_string(&phases).unwrap(),
        "start_ms,end_ms,kind\n5000,7500,pause-replication\n"
    );
    assert!(serde_json::from_str::<Value>(&std::fs::read_to_string(&stats).unwrap()).is_ok());
    let first = text.clone();
    assert_eq!(json(&args).0, EXIT_OK);
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), first);
    let o = cli(&["experiment", "--steady-ms", "0"]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("steady_ms"));
}

#[test]
fn unwritable_output_is_an_error() {
    let o = cli(&[
        "experiment",
        "--total-ms",
        "2000",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("/nonexistent-dir/x.csv"));
}

#[test]
fn help_version_and_missing_subcommand() {
    let o = cli(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("explore"));
    assert_eq!(cli(&["--version"]).code, EXIT_OK);
    assert_eq!(cli(&[]).code, EXIT_ERROR);
}

fn subcommand() -> impl Strategy<Value = (&'static str, Vec<&'static str>)> {
    prop_oneof![
        Just((
            "explore",
            vec![
                "--servers",
                "--max-term",
                "--max-log-len",
                "--max-config-version"
            ]
        )),
        Just((
            "simulate",
            vec![
                "--seed",
                "--servers",
                "--duration-ms",
                "--write-period-ms",
                "--write-timeout-ms"
            ]
        )),
        Just((
            "experiment",
            vec![
                "--seed",
                "--steady-ms",
                "--degraded-ms",
                "--total-ms",
                "--writer-period-ms"
            ]
        )),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A numeric flag with a value that is not a number is rejected before anything runs.
    #[test]
    fn non_numeric_values_exit_two(
        (cmd, flags) in subcommand(),
        pick in any::<prop::sample::Index>(),
        bad in prop_oneof![Just("abc".to_string()), Just("1.5".to_string()), Just("99999999999999999999999".to_string()), "[a-z]{1,6}"],
    ) {
        let flag = *pick.get(&flags);
        let o = cli(&[cmd, flag, &bad]);
        prop_assert_eq!(o.code, EXIT_ERROR);
        prop_assert!(o.stderr.contains(flag), "{}", o.stderr);
    }

    /// Unknown flags and bad enum values are usage errors that name the flag.
    #[test]
    fn unknown_flags_and_values_exit_two(
        (cmd, _) in subcommand(),
        junk in "--[a-z]{3,10}",
        bad_mode in "[a-z]{1,8}",
    ) {
        prop_assume!(!["--servers", "--seed", "--json", "--help", "--symmetry", "--version"].contains(&junk.as_str()));
        let known = ["--max-term", "--max-log-len", "--preset", "--mode", "--invariants", "--faults", "--out", "--backend", "--total-ms"];
        prop_assume!(!known.contains(&junk.as_str()));
        let o = cli(&[cmd, &junk]);
        prop_assert_eq!(o.code, EXIT_ERROR);
        prop_assert!(o.stderr.contains(&junk), "{}", o.stderr);
        prop_assume!(!["full", "logless", "raft"].contains(&bad_mode.as_str()));
        let o = cli(&["explore", "--mode", &bad_mode]);
        prop_assert_eq!(o.code, EXIT_ERROR);
        prop_assert!(o.stderr.contains("--mode"));
        let o = cli(&["experiment", "--backend", &bad_mode]);
        prop_assert_eq!(o.code, EXIT_ERROR);
        prop_assert!(o.stderr.contains("--backend"));
    }
}

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use logless_reconfig::experiment::{
    run_availability_experiment, Backend, ExperimentParams, WARMUP_MS,
};
use logless_reconfig::explorer::{
    explore_with, project_and_check_refinement, replay_with, Bounds, ExploreParams, ProtocolMode,
    RefinementOutcome, ReplayOutcome, Trace, Verdict,
};
use logless_reconfig::invariants::InvariantId;
use logless_reconfig::protocol::{Rules, MAX_SERVER_ID};
use logless_reconfig::simnet::{
    run_simulation, ClientWorkload, FaultSchedule, ObserverVerdict, SimConfig, SimStats,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, to_value, Value};

use crate::{
    read_file, usage, write_file, BackendArg, CliError, ExperimentArgs, ExploreArgs, ModeArg,
    Preset, RefineArgs, ReplayArgs, Report, SimulateArgs,
};

fn value<T: Serialize>(v: &T) -> Value {
    to_value(v).expect("reports serialize")
}

impl From<ModeArg> for ProtocolMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => ProtocolMode::Full,
            ModeArg::Logless => ProtocolMode::LoglessOnly,
        }
    }
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Logless => Backend::Logless,
            BackendArg::RaftOplog => Backend::RaftOplog,
        }
    }
}

#[derive(Serialize)]
struct ExploreSettings {
    mode: ProtocolMode,
    servers: u8,
    max_term: u32,
    max_log_len: u32,
    max_config_version: u32,
    symmetry: bool,
    invariants: Vec<InvariantId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mutation: Option<String>,
}

fn preset_settings(p: Preset) -> ExploreSettings {
    match p {
        Preset::Fig2a => ExploreSettings {
            mode: ProtocolMode::Full,
            servers: 4,
            max_term: 3,
            max_log_len: 2,
            max_config_version: 3,
            symmetry: true,
            invariants: vec![InvariantId::LeaderCompleteness],
            mutation: None,
        },
        Preset::Fig2b => ExploreSettings {
            mode: ProtocolMode::LoglessOnly,
            servers: 5,
            max_term: 4,
            max_log_len: 0,
            max_config_version: 4,
            symmetry: true,
            invariants: vec![InvariantId::ElectionSafety],
            mutation: None,
        },
    }
}

fn resolve_explore(a: &ExploreArgs) -> Result<ExploreSettings, CliError> {
    let base = a.preset.map(preset_settings);
    let required = |flag: &str, given: Option<u32>, preset: Option<u32>| {
        given
            .or(preset)
            .ok_or_else(|| usage(format!("explore needs {flag} (or --preset)")))
    };
    let servers = match a.servers.or(base.as_ref().map(|b| b.servers)) {
        Some(s) if (1..=MAX_SERVER_ID).contains(&s) => s,
        Some(s) => {
            return Err(usage(format!(
                "--servers must be between 1 and {MAX_SERVER_ID}, got {s}"
            )))
        }
        None => return Err(usage("explore needs --servers (or --preset)")),
    };
    let max_config_version = required(
        "--max-config-version",
        a.max_config_version,
        base.as_ref().map(|b| b.max_config_version),
    )?;
    if max_config_version == 0 {
        return Err(usage("--max-config-version must be at least 1"));
    }
    let invariants = match &a.invariants {
        Some(list) => {
            let ids =
                InvariantId::parse_list(list).map_err(|e| usage(format!("--invariants: {e}")))?;
            if ids.is_empty() {
                return Err(usage("--invariants selects nothing"));
            }
            ids
        }
        None => base
            .as_ref()
            .map_or(InvariantId::ALL.to_vec(), |b| b.invariants.clone()),
    };
    Ok(ExploreSettings {
        mode: a
            .mode
            .map(Into::into)
            .or(base.as_ref().map(|b| b.mode))
            .unwrap_or(ProtocolMode::Full),
        servers,
        max_term: required("--max-term", a.max_term, base.as_ref().map(|b| b.max_term))?,
        max_log_len: a
            .max_log_len
            .or(base.as_ref().map(|b| b.max_log_len))
            .unwrap_or(0),
        max_config_version,
        symmetry: a.symmetry || base.as_ref().is_some_and(|b| b.symmetry),
        invariants,
        #[cfg(feature = "mutations")]
        mutation: a.mutate.clone(),
        #[cfg(not(feature = "mutations"))]
        mutation: None,
    })
}

#[cfg(feature = "mutations")]
fn apply_mutation(params: ExploreParams, name: Option<&str>) -> Result<ExploreParams, CliError> {
    use logless_reconfig::protocol::Mutation;
    match name {
        None => Ok(params),
        Some(name) => {
            let m: Mutation = name.parse().map_err(|e| usage(format!("--mutate: {e}")))?;
            Ok(params.mutate(m))
        }
    }
}

#[cfg(not(feature = "mutations"))]
fn apply_mutation(params: ExploreParams, _: Option<&str>) -> Result<ExploreParams, CliError> {
    Ok(params)
}

pub(crate) fn explore(a: ExploreArgs, err: &mut dyn Write) -> Result<Report, CliError> {
    let s = resolve_explore(&a)?;
    let bounds = Bounds::new(s.servers, s.max_term, s.max_log_len, s.max_config_version);
    let params = ExploreParams::new(s.mode, bounds)
        .invariants(&s.invariants)
        .symmetry(s.symmetry);
    let params = apply_mutation(params, s.mutation.as_deref())?;
    let started = Instant::now();
    let report = explore_with(&params).map_err(|e| usage(e.to_string()))?;
    let _ = writeln!(err, "explored in {:.2}s", started.elapsed().as_secs_f64());

    let mut human = String::new();
    writeln!(human, "verdict: {}", report.verdict).unwrap();
    writeln!(human, "distinct states: {}", report.distinct_states).unwrap();
    writeln!(human, "transitions: {}", report.transitions).unwrap();
    writeln!(human, "max depth: {}", report.max_depth).unwrap();
    if let (Some(id), Some(trace)) = (report.violated, &report.counterexample) {
        writeln!(human, "violated: {id}").unwrap();
        writeln!(human, "counterexample ({} steps):", trace.steps.len()).unwrap();
        for (k, step) in trace.steps.iter().enumerate() {
            writeln!(human, "  {}. {step}", k + 1).unwrap();
        }
        if let Some(path) = &a.trace_out {
            write_file(path, &trace.to_json())?;
        }
    }
    Ok(Report {
        command: "explore",
        params: value(&s),
        result: value(&report),
        human,
        finding: report.verdict == Verdict::Violation,
    })
}

#[derive(Serialize)]
struct SimulateSettings {
    seed: u64,
    servers: u8,
    duration_ms: u64,
    faults: FaultSchedule,
    client: Option<ClientWorkload>,
}

#[derive(Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
enum SimVerdict {
    AllHold,
    Violation {
        time_ms: u64,
        invariant: InvariantId,
        witness: Value,
    },
}

#[derive(Serialize)]
struct SimulateResult {
    #[serde(flatten)]
    verdict: SimVerdict,
    acknowledged_writes_durable: bool,
    stats: SimStats,
}

pub(crate) fn simulate(a: SimulateArgs) -> Result<Report, CliError> {
    if !(1..=MAX_SERVER_ID).contains(&a.servers) {
        return Err(usage(format!(
            "--servers must be between 1 and {MAX_SERVER_ID}, got {}",
            a.servers
        )));
    }
    let cfg = SimConfig::with_servers(a.seed, a.servers, a.duration_ms);
    let faults = match (&a.faults, a.random_faults) {
        (Some(path), _) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| usage(format!("--faults {}: {e}", path.display())))?,
        (None, true) => FaultSchedule::random(
            &mut ChaCha8Rng::seed_from_u64(a.seed),
            cfg.universe,
            a.duration_ms,
        ),
        (None, false) => FaultSchedule::none(),
    };
    let client =
        (a.write_period_ms.is_some() || a.random_reconfig_ms.is_some()).then(|| ClientWorkload {
            random_reconfig_period_ms: a.random_reconfig_ms,
            ..ClientWorkload::writer(
                WARMUP_MS.min(a.duration_ms / 2),
                a.write_period_ms.unwrap_or(20),
                a.write_timeout_ms,
            )
        });
    if client
        .as_ref()
        .is_some_and(|c| c.write_period_ms == 0 || c.write_timeout_ms == 0)
    {
        return Err(usage(
            "--write-period-ms and --write-timeout-ms must be positive",
        ));
    }
    if a.random_reconfig_ms == Some(0) {
        return Err(usage("--random-reconfig-ms must be positive"));
    }
    let settings = SimulateSettings {
        seed: a.seed,
        servers: a.servers,
        duration_ms: a.duration_ms,
        faults: faults.clone(),
        client: client.clone(),
    };
    let out = run_simulation(cfg, faults, client).map_err(|e| usage(e.to_string()))?;
    if let Some(path) = &a.out {
        write_file(path, &out.event_log_jsonl())?;
    }
    let trace = match &out.verdict {
        ObserverVerdict::Violation { trace, .. } => trace,
        ObserverVerdict::AllHold => &out.trace,
    };
    if let Some(path) = &a.trace_out {
        write_file(path, &trace.to_json())?;
    }
    let verdict = match &out.verdict {
        ObserverVerdict::AllHold => SimVerdict::AllHold,
        ObserverVerdict::Violation {
            time_ms,
            invariant,
            witness,
            ..
        } => SimVerdict::Violation {
            time_ms: *time_ms,
            invariant: *invariant,
            witness: value(witness),
        },
    };
    let durable = out.stats.durability_violations == 0;
    let finding = !matches!(verdict, SimVerdict::AllHold) || !durable;
    let st = &out.stats;
    let mut human = String::new();
    match &verdict {
        SimVerdict::AllHold => writeln!(human, "verdict: all-hold").unwrap(),
        SimVerdict::Violation {
            time_ms, invariant, ..
        } => writeln!(human, "verdict: violation of {invariant} at {time_ms} ms").unwrap(),
    }
    writeln!(human, "acknowledged writes durable: {durable}").unwrap();
    writeln!(
        human,
        "events: {}, messages: {} sent / {} dropped, actions: {}, stale drops: {}",
        st.events, st.messages_sent, st.messages_dropped, st.actions_applied, st.stale_drops
    )
    .unwrap();
    writeln!(
        human,
        "elections: {} started / {} won, writes: {} issued / {} committed / {} timed out",
        st.elections_started,
        st.elections_won,
        st.writes_issued,
        st.writes_committed,
        st.writes_timed_out
    )
    .unwrap();
    Ok(Report {
        command: "simulate",
        params: value(&settings),
        result: value(&SimulateResult {
            verdict,
            acknowledged_writes_durable: durable,
            stats: out.stats,
        }),
        human,
        finding,
    })
}

pub(crate) fn experiment(a: ExperimentArgs) -> Result<Report, CliError> {
    let d = ExperimentParams::default();
    let params = ExperimentParams {
        steady_ms: a.steady_ms.unwrap_or(d.steady_ms),
        degraded_ms: a.degraded_ms.unwrap_or(d.degraded_ms),
        detection_delay_ms: a.detection_delay_ms.unwrap_or(d.detection_delay_ms),
        write_timeout_ms: a.write_timeout_ms.unwrap_or(d.write_timeout_ms),
        total_ms: a.total_ms.unwrap_or(d.total_ms),
        writer_period_ms: a.writer_period_ms.unwrap_or(d.writer_period_ms),
        seed: a.seed,
    };
    let backend: Backend = a.backend.into();
    let out = run_availability_experiment(backend, &params)
        .map_err(|e| usage(format!("{e} (check the --*-ms flags)")))?;
    if let Some(path) = &a.out {
        write_file(path, &out.latency_csv())?;
    }
    if let Some(path) = &a.phases_out {
        write_file(path, &out.phases_csv())?;
    }
    if let Some(path) = &a.stats_out {
        write_file(path, &out.stats_json())?;
    }
    let phases = &out.stats.phases;
    let recovered = phases.iter().filter(|p| p.recovery_ms.is_some()).count();
    let mut human = String::new();
    writeln!(
        human,
        "backend: {}",
        value(&backend).as_str().unwrap_or_default()
    )
    .unwrap();
    writeln!(human, "safe: {}", out.safe).unwrap();
    writeln!(
        human,
        "writes: {} issued, {} timed out",
        out.stats.total_writes, out.stats.total_timeouts
    )
    .unwrap();
    writeln!(
        human,
        "degraded phases recovered: {recovered}/{}",
        phases.len()
    )
    .unwrap();
    for p in phases {
        let rec = p
            .recovery_ms
            .map_or("never".to_string(), |r| format!("{r} ms"));
        writeln!(
            human,
            "  {}..{} ms: recovery {rec}, {} of {} writes committed in phase",
            p.start_ms, p.end_ms, p.committed_before_end, p.writes
        )
        .unwrap();
    }
    Ok(Report {
        command: "experiment",
        params: json!({"backend": backend, "params": params}),
        result: json!({
            "safe": out.safe,
            "phases_recovered": recovered,
            "stats": out.stats,
            "sim_stats": out.sim_stats,
        }),
        human,
        finding: !out.safe,
    })
}

fn load_trace(path: &std::path::Path) -> Result<Trace, CliError> {
    Trace::from_json(&read_file(path)?)
        .map_err(|e| usage(format!("{}: not a trace: {e}", path.display())))
}

#[cfg(feature = "mutations")]
fn replay_rules(a: &ReplayArgs) -> Result<Rules, CliError> {
    use logless_reconfig::protocol::Mutation;
    let rules = ProtocolMode::from(a.mode).rules();
    match &a.mutate {
        None => Ok(rules),
        Some(name) => {
            let m: Mutation = name.parse().map_err(|e| usage(format!("--mutate: {e}")))?;
            Ok(rules.mutated(m))
        }
    }
}

#[cfg(not(feature = "mutations"))]
fn replay_rules(a: &ReplayArgs) -> Result<Rules, CliError> {
    Ok(ProtocolMode::from(a.mode).rules())
}

pub(crate) fn replay(a: ReplayArgs) -> Result<Report, CliError> {
    let rules = replay_rules(&a)?;
    let trace = load_trace(&a.file)?;
    let outcome = replay_with(&trace, &rules);
    let human = match &outcome {
        ReplayOutcome::Valid { .. } => format!("valid ({} steps)\n", trace.steps.len()),
        ReplayOutcome::InvalidAtStep { step, reason } => {
            format!("invalid at step {step}: {reason}\n")
        }
    };
    #[cfg(feature = "mutations")]
    let params = json!({"file": a.file, "mode": a.mode, "mutation": a.mutate});
    #[cfg(not(feature = "mutations"))]
    let params = json!({"file": a.file, "mode": a.mode});
    Ok(Report {
        command: "replay",
        params,
        finding: !matches!(outcome, ReplayOutcome::Valid { .. }),
        result: value(&outcome),
        human,
    })
}

pub(crate) fn refine(a: RefineArgs) -> Result<Report, CliError> {
    let trace = load_trace(&a.file)?;
    let outcome = project_and_check_refinement(&trace);
    let human = match &outcome {
        RefinementOutcome::Refines => format!("refines ({} steps)\n", trace.steps.len()),
        RefinementOutcome::FailsAtStep { step, reason } => {
            format!("fails at step {step}: {reason}\n")
        }
    };
    Ok(Report {
        command: "refine",
        params: json!({"file": a.file}),
        finding: outcome != RefinementOutcome::Refines,
        result: value(&outcome),
        human,
    })
}

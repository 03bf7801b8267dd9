//! The degraded-replication availability experiment.
//!
//! A voting trio `{n0, n1, n2}` serves a single writer while four more
//! servers replicate without votes. Replication on the two voting
//! secondaries is paused at regular intervals. After a fixed detection delay
//! a controller swaps them for two healthy standbys, one membership change at
//! a time. With logless reconfiguration the swap completes while the old
//! secondaries are still degraded, so writes recover. When every
//! reconfiguration must first commit a no-op entry in the current config, the
//! swap cannot begin until the degradation ends.
//!
//! ```
//! use logless_reconfig::experiment::{run_availability_experiment, Backend, ExperimentParams};
//!
//! let params = ExperimentParams { total_ms: 10_000, ..ExperimentParams::default() };
//! let logless = run_availability_experiment(Backend::Logless, &params).unwrap();
//! let oplog = run_availability_experiment(Backend::RaftOplog, &params).unwrap();
//! assert!(logless.stats.phases[0].recovery_ms.is_some());
//! assert!(oplog.stats.phases[0].recovery_ms.is_none());
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::protocol::MemberSet;
use crate::simnet::{
    run_simulation, ClientWorkload, ControllerSpec, EventKind, Fault, FaultKind, FaultSchedule,
    FaultTarget, ObserverVerdict, SimConfig, SimError, SimStats, WriteOutcome,
};

pub use crate::simnet::ReconfigBackend as Backend;

/// The writer starts once the initial election has settled.
pub const WARMUP_MS: u64 = 1_000;

/// Seven servers `n0..n6`.
pub const UNIVERSE: MemberSet = MemberSet::from_bits(0b111_1111);

/// The initial voting members `{n0, n1, n2}`.
pub const INITIAL_MEMBERS: MemberSet = MemberSet::from_bits(0b111);

const DEGRADED_VOTERS: usize = 2;
const CONTROLLER_TICK_MS: u64 = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub steady_ms: u64,
    pub degraded_ms: u64,
    pub detection_delay_ms: u64,
    pub write_timeout_ms: u64,
    pub total_ms: u64,
    pub writer_period_ms: u64,
    pub seed: u64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            steady_ms: 5_000,
            degraded_ms: 2_500,
            detection_delay_ms: 500,
            write_timeout_ms: 100,
            total_ms: 60_000,
            writer_period_ms: 20,
            seed: 0,
        }
    }
}

impl ExperimentParams {
    /// A zero `degraded_ms` is allowed and means no degradation at all.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = [
            ("steady_ms", self.steady_ms),
            ("detection_delay_ms", self.detection_delay_ms),
            ("write_timeout_ms", self.write_timeout_ms),
            ("total_ms", self.total_ms),
            ("writer_period_ms", self.writer_period_ms),
        ];
        match positive.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ExperimentError::InvalidParams(format!(
                "{name} must be positive"
            ))),
            None => Ok(()),
        }
    }

    /// Degraded phases: after each steady period, `degraded_ms` of paused
    /// replication on the two voting secondaries.
    pub fn phases(&self) -> FaultSchedule {
        let mut faults = Vec::new();
        if self.degraded_ms > 0 {
            let mut start = self.steady_ms;
            while start < self.total_ms {
                faults.push(Fault {
                    start_ms: start,
                    end_ms: (start + self.degraded_ms).min(self.total_ms),
                    target: FaultTarget::VotingSecondaries(DEGRADED_VOTERS),
                    kind: FaultKind::PauseReplication,
                });
                start += self.degraded_ms + self.steady_ms;
            }
        }
        FaultSchedule { faults }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment parameters: {0}")]
    InvalidParams(String),
    #[error("{available} standbys cannot replace {needed} degraded voters")]
    NotEnoughStandbys { available: usize, needed: usize },
    #[error("latency records are not ordered by issue time at record {0}")]
    Unordered(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub issued_at_ms: u64,
    pub latency_ms: u64,
    pub outcome: WriteOutcome,
}

impl LatencyRecord {
    pub fn completed_at_ms(&self) -> u64 {
        self.issued_at_ms + self.latency_ms
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub start_ms: u64,
    pub end_ms: u64,
    /// Offset from the phase start to the issue time of the first write that
    /// was issued in the phase and committed before it ended.
    pub recovery_ms: Option<u64>,
    pub writes: u64,
    pub timeouts: u64,
    /// Writes issued in the phase that committed before it ended.
    pub committed_before_end: u64,
    /// Completion times of membership changes made during the phase.
    pub reconfigs_completed_at_ms: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityStats {
    pub phases: Vec<PhaseStats>,
    pub total_writes: u64,
    pub total_timeouts: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub backend: Backend,
    pub params: ExperimentParams,
    pub records: Vec<LatencyRecord>,
    pub stats: AvailabilityStats,
    pub phases: FaultSchedule,
    /// Whether the safety observer saw no violation and every acknowledged
    /// write survived into later primaries.
    pub safe: bool,
    pub sim_stats: SimStats,
}

impl ExperimentOutput {
    pub fn latency_csv(&self) -> String {
        latency_csv(&self.records)
    }

    pub fn phases_csv(&self) -> String {
        phases_csv(&self.phases)
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&self.stats).expect("stats serialize")
    }
}

/// Runs one backend against the scenario fixed by `params`.
pub fn run_availability_experiment(
    backend: Backend,
    params: &ExperimentParams,
) -> Result<ExperimentOutput, ExperimentError> {
    params.validate()?;
    let standbys = UNIVERSE.difference(INITIAL_MEMBERS).len();
    if standbys < DEGRADED_VOTERS {
        return Err(ExperimentError::NotEnoughStandbys {
            available: standbys,
            needed: DEGRADED_VOTERS,
        });
    }
    let cfg = SimConfig::new(params.seed, UNIVERSE, INITIAL_MEMBERS, params.total_ms);
    let phases = params.phases();
    let client = ClientWorkload {
        controller: Some(ControllerSpec {
            backend,
            detection_delay_ms: params.detection_delay_ms,
            tick_ms: CONTROLLER_TICK_MS,
        }),
        ..ClientWorkload::writer(
            WARMUP_MS.min(params.steady_ms),
            params.writer_period_ms,
            params.write_timeout_ms,
        )
    };
    let out = run_simulation(cfg, phases.clone(), Some(client))?;
    let mut records: Vec<LatencyRecord> = out
        .writes
        .iter()
        .map(|w| LatencyRecord {
            issued_at_ms: w.issued_at_ms,
            latency_ms: w.completed_at_ms - w.issued_at_ms,
            outcome: w.outcome,
        })
        .collect();
    records.sort_by_key(|r| r.issued_at_ms);
    let mut stats = summarize(&records, &phases)?;
    let completions = out.event_log.iter().filter_map(|e| match e.event {
        EventKind::ReconfigCompleted { .. } => Some(e.time_ms),
        _ => None,
    });
    for t in completions {
        if let Some(p) = stats
            .phases
            .iter_mut()
            .find(|p| (p.start_ms..p.end_ms).contains(&t))
        {
            p.reconfigs_completed_at_ms.push(t);
        }
    }
    Ok(ExperimentOutput {
        backend,
        params: params.clone(),
        records,
        stats,
        phases,
        safe: out.verdict == ObserverVerdict::AllHold && out.stats.durability_violations == 0,
        sim_stats: out.stats,
    })
}

/// Per-phase availability figures. Records must be ordered by issue time.
pub fn summarize(
    records: &[LatencyRecord],
    phases: &FaultSchedule,
) -> Result<AvailabilityStats, ExperimentError> {
    if let Some(k) = records
        .windows(2)
        .position(|w| w[0].issued_at_ms > w[1].issued_at_ms)
    {
        return Err(ExperimentError::Unordered(k + 1));
    }
    let phases = phases
        .faults
        .iter()
        .map(|f| {
            let (start, end) = (f.start_ms, f.end_ms);
            let lo = records.partition_point(|r| r.issued_at_ms < start);
            let hi = records.partition_point(|r| r.issued_at_ms < end);
            let inside = &records[lo..hi];
            let ok_before_end = |r: &&LatencyRecord| {
                r.outcome == WriteOutcome::Committed && r.completed_at_ms() < end
            };
            PhaseStats {
                start_ms: start,
                end_ms: end,
                recovery_ms: inside
                    .iter()
                    .find(ok_before_end)
                    .map(|r| r.issued_at_ms - start),
                writes: inside.len() as u64,
                timeouts: inside
                    .iter()
                    .filter(|r| r.outcome == WriteOutcome::Timeout)
                    .count() as u64,
                committed_before_end: inside.iter().filter(ok_before_end).count() as u64,
                reconfigs_completed_at_ms: Vec::new(),
            }
        })
        .collect();
    Ok(AvailabilityStats {
        phases,
        total_writes: records.len() as u64,
        total_timeouts: records
            .iter()
            .filter(|r| r.outcome == WriteOutcome::Timeout)
            .count() as u64,
    })
}

fn outcome_name(o: WriteOutcome) -> &'static str {
    match o {
        WriteOutcome::Committed => "committed",
        WriteOutcome::Timeout => "timeout",
    }
}

/// `issued_at_ms,latency_ms,outcome`, one line per write.
pub fn latency_csv(records: &[LatencyRecord]) -> String {
    let mut out = String::from("issued_at_ms,latency_ms,outcome\n");
    for r in records {
        writeln!(
            out,
            "{},{},{}",
            r.issued_at_ms,
            r.latency_ms,
            outcome_name(r.outcome)
        )
        .expect("string write");
    }
    out
}

/// `start_ms,end_ms,kind`, one line per degraded phase.
pub fn phases_csv(phases: &FaultSchedule) -> String {
    let mut out = String::from("start_ms,end_ms,kind\n");
    for f in &phases.faults {
        let kind = match f.kind {
            FaultKind::PauseReplication => "pause-replication",
            FaultKind::PauseNode => "pause-node",
        };
        writeln!(out, "{},{},{kind}", f.start_ms, f.end_ms).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(issued_at_ms: u64, latency_ms: u64, outcome: WriteOutcome) -> LatencyRecord {
        LatencyRecord {
            issued_at_ms,
            latency_ms,
            outcome,
        }
    }

    fn one_phase(start_ms: u64, end_ms: u64) -> FaultSchedule {
        FaultSchedule {
            faults: vec![Fault {
                start_ms,
                end_ms,
                target: FaultTarget::VotingSecondaries(2),
                kind: FaultKind::PauseReplication,
            }],
        }
    }

    #[test]
    fn empty_records_give_zero_counts() {
        let stats = summarize(&[], &one_phase(100, 200)).unwrap();
        assert_eq!(stats.total_writes, 0);
        assert_eq!(stats.total_timeouts, 0);
        assert_eq!(stats.phases[0].writes, 0);
        assert_eq!(stats.phases[0].recovery_ms, None);
    }

    #[test]
    fn recovery_is_the_first_committed_offset() {
        let records = [
            rec(50, 3, WriteOutcome::Committed),
            rec(120, 100, WriteOutcome::Timeout),
            rec(140, 7, WriteOutcome::Committed),
            rec(160, 2, WriteOutcome::Committed),
        ];
        let stats = summarize(&records, &one_phase(100, 200)).unwrap();
        let p = &stats.phases[0];
        assert_eq!(p.recovery_ms, Some(40));
        assert_eq!(p.writes, 3);
        assert_eq!(p.timeouts, 1);
        assert_eq!(p.committed_before_end, 2);
        assert_eq!(stats.total_writes, 4);
    }

    #[test]
    fn commits_after_the_phase_do_not_count_as_recovery() {
        let records = [rec(190, 30, WriteOutcome::Committed)];
        let stats = summarize(&records, &one_phase(100, 200)).unwrap();
        assert_eq!(stats.phases[0].recovery_ms, None);
        assert_eq!(stats.phases[0].writes, 1);
    }

    #[test]
    fn unordered_records_are_rejected() {
        let records = [
            rec(20, 1, WriteOutcome::Committed),
            rec(10, 1, WriteOutcome::Committed),
        ];
        assert_eq!(
            summarize(&records, &FaultSchedule::none()),
            Err(ExperimentError::Unordered(1))
        );
    }

    #[test]
    fn phase_schedule_alternates() {
        let phases = ExperimentParams::default().phases();
        assert_eq!(phases.faults.len(), 8);
        assert_eq!(
            (phases.faults[0].start_ms, phases.faults[0].end_ms),
            (5_000, 7_500)
        );
        assert_eq!(
            (phases.faults[7].start_ms, phases.faults[7].end_ms),
            (57_500, 60_000)
        );
        let none = ExperimentParams {
            degraded_ms: 0,
            ..ExperimentParams::default()
        };
        assert!(none.phases().faults.is_empty());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = ExperimentParams {
            writer_period_ms: 0,
            ..ExperimentParams::default()
        };
        assert!(matches!(
            run_availability_experiment(Backend::Logless, &bad),
            Err(ExperimentError::InvalidParams(_))
        ));
    }

    #[test]
    fn csv_layouts() {
        let records = [
            rec(1_000, 4, WriteOutcome::Committed),
            rec(1_020, 100, WriteOutcome::Timeout),
        ];
        assert_eq!(
            latency_csv(&records),
            "issued_at_ms,latency_ms,outcome\n1000,4,committed\n1020,100,timeout\n"
        );
        assert_eq!(
            phases_csv(&one_phase(5, 9)),
            "start_ms,end_ms,kind\n5,9,pause-replication\n"
        );
    }

    #[test]
    fn no_degradation_means_no_timeouts() {
        let params = ExperimentParams {
            degraded_ms: 0,
            total_ms: 8_000,
            ..ExperimentParams::default()
        };
        for backend in [Backend::Logless, Backend::RaftOplog] {
            let out = run_availability_experiment(backend, &params).unwrap();
            assert_eq!(out.stats.total_timeouts, 0, "{backend:?}");
            assert!(out.safe);
        }
    }

    #[test]
    fn logless_recovers_and_oplog_does_not() {
        let params = ExperimentParams {
            total_ms: 16_000,
            seed: 3,
            ..ExperimentParams::default()
        };
        let logless = run_availability_experiment(Backend::Logless, &params).unwrap();
        let oplog = run_availability_experiment(Backend::RaftOplog, &params).unwrap();
        assert!(logless.safe && oplog.safe);
        for (a, b) in logless.stats.phases.iter().zip(&oplog.stats.phases) {
            assert!(a.recovery_ms.is_some(), "{a:?}");
            assert_eq!(b.committed_before_end, 0, "{b:?}");
            assert!(a.timeouts < b.timeouts);
            assert_eq!(a.reconfigs_completed_at_ms.len(), 4);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let params = ExperimentParams {
            total_ms: 9_000,
            seed: 11,
            ..ExperimentParams::default()
        };
        let a = run_availability_experiment(Backend::Logless, &params).unwrap();
        let b = run_availability_experiment(Backend::Logless, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.latency_csv(), b.latency_csv());
        assert_eq!(a.stats_json(), b.stats_json());
    }
}

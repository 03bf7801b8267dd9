//! Deterministic discrete-event simulation of the protocol over a message network.
//!
//! Every server is a node that decides from what it has heard: heartbeats
//! advertise terms, config `(version, term)` and log position; configs are
//! pulled on demand; elections run in two phases; secondaries pull log
//! entries one at a time. Each decision takes effect by applying the
//! matching protocol action to the true global state. If what the node heard
//! has gone stale and the action's guard no longer holds, the decision is
//! dropped, so the sequence of applied actions is always a valid trace of the
//! atomic protocol.
//!
//! The loop is single-threaded and every random choice comes from one seeded
//! generator, so identical inputs give identical outputs.
//!
//! Elections refine the atomic `BecomeLeader` as follows. A candidate proposes
//! term `T = term + 1` and freezes; a voter that grants its vote promises not
//! to change its term, config or log, nor to vote again, for a window longer
//! than the candidate's round. The candidate wins once the granting voters
//! and itself form a quorum of its config, at which point `BecomeLeader`
//! applies to exactly that quorum.

mod faults;
mod node;
mod observer;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::explorer::Trace;
use crate::invariants::{InvariantId, Witness};
use crate::protocol::{
    initial_state, Action, Config, GlobalState, GuardError, LogTerm, MemberSet, ServerId, Term,
};

pub use faults::{Fault, FaultKind, FaultSchedule, FaultTarget};
use node::{Controller, Node};
use observer::Observer;

/// Timing and topology of one run. All durations are virtual milliseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub universe: MemberSet,
    pub m_init: MemberSet,
    pub heartbeat_interval_ms: u64,
    pub election_timeout_min_ms: u64,
    pub election_timeout_max_ms: u64,
    pub message_delay_min_ms: u64,
    pub message_delay_max_ms: u64,
    /// How often a secondary asks its sync source for the next entry.
    pub pull_interval_ms: u64,
    pub duration_ms: u64,
}

impl SimConfig {
    /// Default timing: heartbeats every 50 ms, election timeouts of 150 to
    /// 300 ms, message delays of 1 to 5 ms.
    pub fn new(seed: u64, universe: MemberSet, m_init: MemberSet, duration_ms: u64) -> Self {
        SimConfig {
            seed,
            universe,
            m_init,
            heartbeat_interval_ms: 50,
            election_timeout_min_ms: 150,
            election_timeout_max_ms: 300,
            message_delay_min_ms: 1,
            message_delay_max_ms: 5,
            pull_interval_ms: 10,
            duration_ms,
        }
    }

    /// Servers `n1..nN`, all of them initial members.
    pub fn with_servers(seed: u64, servers: u8, duration_ms: u64) -> Self {
        let universe = MemberSet::from_bits(((1u64 << (u32::from(servers) + 1)) - 2) as u32);
        SimConfig::new(seed, universe, universe, duration_ms)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::BadConfig(msg.to_string()));
        if self.universe.is_empty() {
            return bad("the universe is empty");
        }
        if self.m_init.is_empty() || !self.m_init.is_subset(self.universe) {
            return bad("initial members must be a non-empty subset of the universe");
        }
        if self.election_timeout_min_ms > self.election_timeout_max_ms
            || self.message_delay_min_ms > self.message_delay_max_ms
        {
            return bad("range minimum exceeds maximum");
        }
        if self.duration_ms == 0 || self.heartbeat_interval_ms == 0 || self.pull_interval_ms == 0 {
            return bad("durations and intervals must be positive");
        }
        if self.message_delay_min_ms == 0 {
            return bad("message delays must be at least 1 ms");
        }
        Ok(())
    }

    /// How long a candidate waits for votes.
    fn round_ms(&self) -> u64 {
        2 * self.message_delay_max_ms + 1
    }

    /// How long a granted vote binds the voter; outlasts any round it can join.
    fn promise_ms(&self) -> u64 {
        2 * self.message_delay_max_ms + 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("malformed fault schedule: {0}")]
    BadSchedule(String),
    #[error("no more events")]
    NoMoreEvents,
    #[error(transparent)]
    Guard(#[from] GuardError),
}

/// What travels between nodes. Payloads carry only what the receiving
/// side's guards read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Heartbeat {
        term: Term,
        config_version: u32,
        config_term: Term,
        is_primary: bool,
        log_len: u32,
        last_term: LogTerm,
    },
    ConfigRequest,
    ConfigTransfer {
        config: Config,
    },
    VoteRequest {
        term: Term,
        last_log_term: LogTerm,
        log_len: u32,
        config_version: u32,
        config_term: Term,
    },
    VoteResponse {
        granted: bool,
        term: Term,
    },
    EntriesPull {
        log_len: u32,
        last_term: LogTerm,
        term: Term,
    },
    EntriesPush {
        entry: Term,
        at_index: u32,
    },
    RollbackNotice,
    TermUpdate {
        term: Term,
    },
}

impl Payload {
    fn is_replication(&self) -> bool {
        matches!(
            self,
            Payload::EntriesPull { .. } | Payload::EntriesPush { .. } | Payload::RollbackNotice
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: ServerId,
    pub to: ServerId,
    pub sent_at_ms: u64,
    pub deliver_at_ms: u64,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Event {
    Deliver(Message),
    Heartbeat(ServerId),
    ElectionTimer(ServerId),
    RoundDeadline(ServerId, u64),
    PullTimer(ServerId),
    FaultStart(usize),
    FaultEnd(usize),
    ClientWrite,
    WriteTimeout(u64),
    ControllerPlan(usize),
    ControllerTick,
    RandomReconfig,
}

/// How reconfigurations are carried out by the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconfigBackend {
    /// Install the new config directly through `Reconfig`.
    Logless,
    /// First write a no-op entry and wait for it to commit in the current
    /// config, then install the new config.
    RaftOplog,
}

/// Reacts to replication faults by swapping degraded voters for healthy
/// standbys, one membership change at a time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub backend: ReconfigBackend,
    pub detection_delay_ms: u64,
    pub tick_ms: u64,
}

/// A single writer plus optional reconfiguration activity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientWorkload {
    pub start_ms: u64,
    pub write_period_ms: u64,
    pub write_timeout_ms: u64,
    pub controller: Option<ControllerSpec>,
    /// Every this many ms the primary attempts a random one-server membership change.
    pub random_reconfig_period_ms: Option<u64>,
}

impl ClientWorkload {
    pub fn writer(start_ms: u64, write_period_ms: u64, write_timeout_ms: u64) -> Self {
        ClientWorkload {
            start_ms,
            write_period_ms,
            write_timeout_ms,
            controller: None,
            random_reconfig_period_ms: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteOutcome {
    Committed,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteRecord {
    pub id: u64,
    pub issued_at_ms: u64,
    pub completed_at_ms: u64,
    pub outcome: WriteOutcome,
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub time_ms: u64,
    #[serde(flatten)]
    pub event: EventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "details", rename_all = "kebab-case")]
pub enum EventKind {
    Action {
        action: Action,
    },
    StaleDrop {
        action: Action,
        reason: GuardError,
    },
    ElectionStarted {
        node: ServerId,
        term: Term,
    },
    WriteIssued {
        id: u64,
        node: ServerId,
        index: u32,
        term: Term,
    },
    WriteRejected {
        id: u64,
    },
    WriteCommitted {
        id: u64,
        latency_ms: u64,
    },
    WriteTimedOut {
        id: u64,
    },
    FaultStarted {
        fault: usize,
        kind: FaultKind,
        servers: MemberSet,
    },
    FaultEnded {
        fault: usize,
    },
    ReconfigPlanned {
        steps: Vec<MemberSet>,
    },
    ReconfigCompleted {
        members: MemberSet,
    },
    Violation {
        invariant: InvariantId,
        witness: Witness,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub events: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub actions_applied: u64,
    pub stale_drops: u64,
    pub elections_started: u64,
    pub elections_won: u64,
    pub writes_issued: u64,
    pub writes_committed: u64,
    pub writes_timed_out: u64,
    pub reconfigs_completed: u64,
    /// Acknowledged writes missing from a later, higher-term primary.
    pub durability_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ObserverVerdict {
    AllHold,
    Violation {
        time_ms: u64,
        invariant: InvariantId,
        witness: Witness,
        trace: Trace,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutput {
    pub event_log: Vec<LogEvent>,
    pub verdict: ObserverVerdict,
    pub stats: SimStats,
    pub writes: Vec<WriteRecord>,
    /// Every applied action in order, from the initial state.
    pub trace: Trace,
    pub final_state: GlobalState,
}

impl SimOutput {
    /// The event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.event_log {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct PendingWrite {
    issued_at_ms: u64,
    node: ServerId,
    entry: Option<(u32, Term)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct ActiveFault {
    kind: FaultKind,
    servers: MemberSet,
    end_ms: u64,
}

/// The whole simulation as a value: stepping it is a pure function of it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    cfg: SimConfig,
    faults: FaultSchedule,
    workload: Option<ClientWorkload>,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    rng: ChaCha8Rng,
    global: GlobalState,
    init: GlobalState,
    nodes: Vec<Node>,
    active_faults: BTreeMap<usize, ActiveFault>,
    next_write_id: u64,
    pending_writes: BTreeMap<u64, PendingWrite>,
    controller: Option<Controller>,
    observer: Observer,
    steps: Vec<Action>,
    event_log: Vec<LogEvent>,
    writes: Vec<WriteRecord>,
    stats: SimStats,
}

impl SimState {
    pub fn new(
        cfg: SimConfig,
        faults: FaultSchedule,
        workload: Option<ClientWorkload>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        faults.validate(cfg.universe)?;
        let global = initial_state(cfg.universe, cfg.m_init)?;
        let mut sim = SimState {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            nodes: cfg.universe.iter().map(Node::new).collect(),
            controller: workload
                .as_ref()
                .and_then(|w| w.controller.clone())
                .map(Controller::new),
            init: global.clone(),
            global,
            faults,
            workload,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            active_faults: BTreeMap::new(),
            next_write_id: 0,
            pending_writes: BTreeMap::new(),
            observer: Observer::default(),
            steps: Vec::new(),
            event_log: Vec::new(),
            writes: Vec::new(),
            stats: SimStats::default(),
            cfg,
        };
        let ids: Vec<_> = sim.cfg.universe.iter().collect();
        for id in ids {
            let hb = sim.rng.gen_range(0..sim.cfg.heartbeat_interval_ms);
            sim.schedule(hb, Event::Heartbeat(id));
            let pull = sim.rng.gen_range(0..sim.cfg.pull_interval_ms);
            sim.schedule(pull, Event::PullTimer(id));
            let timeout = sim.election_timeout();
            sim.node_mut(id).election_deadline = timeout;
            sim.schedule(timeout, Event::ElectionTimer(id));
        }
        for k in 0..sim.faults.faults.len() {
            let f = &sim.faults.faults[k];
            let (start, end) = (f.start_ms, f.end_ms);
            if start < end {
                sim.schedule(start, Event::FaultStart(k));
                sim.schedule(end, Event::FaultEnd(k));
            }
        }
        if let Some(w) = sim.workload.clone() {
            sim.schedule(w.start_ms, Event::ClientWrite);
            if let Some(period) = w.random_reconfig_period_ms {
                sim.schedule(w.start_ms + period, Event::RandomReconfig);
            }
        }
        Ok(sim)
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    pub fn global(&self) -> &GlobalState {
        &self.global
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    /// Time of the next pending event, if any.
    pub fn next_event_ms(&self) -> Option<u64> {
        self.queue.keys().next().map(|&(t, _)| t)
    }

    fn done(&self) -> bool {
        self.observer.violation.is_some()
            || self
                .next_event_ms()
                .is_none_or(|t| t > self.cfg.duration_ms)
    }

    /// Pops the least `(time, sequence)` event and runs its handler.
    pub fn step_mut(&mut self) -> Result<(), SimError> {
        let (&(time, seq), _) = self.queue.iter().next().ok_or(SimError::NoMoreEvents)?;
        let event = self.queue.remove(&(time, seq)).expect("key just seen");
        self.now = time;
        self.stats.events += 1;
        self.handle(event);
        Ok(())
    }

    pub fn into_output(mut self) -> SimOutput {
        self.stats.durability_violations = self.observer.durability_violations;
        let trace = Trace {
            init: self.init,
            steps: self.steps,
        };
        let verdict = match self.observer.violation {
            None => ObserverVerdict::AllHold,
            Some((time_ms, invariant, witness)) => ObserverVerdict::Violation {
                time_ms,
                invariant,
                witness,
                trace: trace.clone(),
            },
        };
        SimOutput {
            event_log: self.event_log,
            verdict,
            stats: self.stats,
            writes: self.writes,
            trace,
            final_state: self.global,
        }
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.queue.insert((at, self.seq), event);
        self.seq += 1;
    }

    fn election_timeout(&mut self) -> u64 {
        self.now
            + self
                .rng
                .gen_range(self.cfg.election_timeout_min_ms..=self.cfg.election_timeout_max_ms)
    }

    fn send(&mut self, from: ServerId, to: ServerId, payload: Payload) {
        let delay = self
            .rng
            .gen_range(self.cfg.message_delay_min_ms..=self.cfg.message_delay_max_ms);
        let msg = Message {
            from,
            to,
            sent_at_ms: self.now,
            deliver_at_ms: self.now + delay,
            payload,
        };
        self.stats.messages_sent += 1;
        self.schedule(msg.deliver_at_ms, Event::Deliver(msg));
    }

    fn log(&mut self, event: EventKind) {
        self.event_log.push(LogEvent {
            time_ms: self.now,
            event,
        });
    }

    fn node(&self, id: ServerId) -> &Node {
        &self.nodes[self.cfg.universe.rank(id).expect("node of the universe")]
    }

    fn node_mut(&mut self, id: ServerId) -> &mut Node {
        let k = self.cfg.universe.rank(id).expect("node of the universe");
        &mut self.nodes[k]
    }

    /// End of the latest active fault of `kind` covering `id`, if any.
    fn paused_until(&self, id: ServerId, kind: FaultKind) -> Option<u64> {
        self.active_faults
            .values()
            .filter(|f| f.kind == kind && f.servers.contains(id) && self.now < f.end_ms)
            .map(|f| f.end_ms)
            .max()
    }

    /// Applies `action` to the true state if its guard still holds there.
    fn apply(&mut self, action: Action) -> bool {
        match action.apply(&self.global) {
            Ok(next) => {
                self.global = next;
                self.stats.actions_applied += 1;
                self.steps.push(action.clone());
                self.log(EventKind::Action {
                    action: action.clone(),
                });
                if let Some((invariant, witness)) = self.observer.after(&self.global, &action) {
                    self.observer.violation = Some((self.now, invariant, witness.clone()));
                    self.log(EventKind::Violation { invariant, witness });
                }
                true
            }
            Err(reason) => {
                self.stats.stale_drops += 1;
                self.log(EventKind::StaleDrop { action, reason });
                false
            }
        }
    }

    /// The primary with the highest term, where clients and the controller send requests.
    fn current_primary(&self) -> Option<ServerId> {
        self.global
            .servers()
            .filter(|(_, s)| s.is_primary())
            .max_by_key(|(id, s)| (s.term, std::cmp::Reverse(*id)))
            .map(|(id, _)| id)
    }

    fn resolve_target(&self, target: &FaultTarget) -> MemberSet {
        match *target {
            FaultTarget::Servers(s) => s,
            FaultTarget::VotingSecondaries(k) => match self.current_primary() {
                Some(p) => {
                    let members = self
                        .global
                        .server(p)
                        .expect("primary exists")
                        .config
                        .members;
                    members.without(p).iter().take(k).collect()
                }
                None => MemberSet::EMPTY,
            },
            FaultTarget::Primary => self.current_primary().into_iter().collect(),
        }
    }
}

/// Runs `cfg.duration_ms` of virtual time, or until the observer reports a violation.
pub fn run_simulation(
    cfg: SimConfig,
    faults: FaultSchedule,
    client: Option<ClientWorkload>,
) -> Result<SimOutput, SimError> {
    let mut sim = SimState::new(cfg, faults, client)?;
    while !sim.done() {
        sim.step_mut()?;
    }
    Ok(sim.into_output())
}

/// One event, as a function from simulation values to simulation values.
pub fn step(sim: &SimState) -> Result<SimState, SimError> {
    let mut next = sim.clone();
    next.step_mut()?;
    Ok(next)
}

//! Node-local knowledge and the event handlers.

use std::collections::BTreeMap;

use rand::Rng;

use crate::protocol::{
    is_quorum, quorums_overlap, some_quorum_within, Action, Config, LogTerm, MemberSet, ServerId,
    Term,
};

use super::{
    ControllerSpec, Event, EventKind, FaultKind, Message, Payload, PendingWrite, ReconfigBackend,
    SimState, WriteOutcome, WriteRecord,
};

/// What a node last heard in a heartbeat from one peer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) struct PeerView {
    term: Term,
    config_version: u32,
    config_term: Term,
    is_primary: bool,
    log_len: u32,
    last_term: LogTerm,
}

/// A peer's log position as reported to a primary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) struct Progress {
    log_len: u32,
    last_term: LogTerm,
    term: Term,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) struct Round {
    id: u64,
    term: Term,
    votes: MemberSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) struct Node {
    id: ServerId,
    peers: BTreeMap<ServerId, PeerView>,
    pub election_deadline: u64,
    /// No term, config, log or vote changes before this time.
    frozen_until: u64,
    round: Option<Round>,
    rounds: u64,
    config_request_until: u64,
    pull_until: u64,
    progress: BTreeMap<ServerId, Progress>,
    /// Last entry this node committed as primary, as `(index, term)`.
    commit: Option<(u32, Term)>,
}

impl Node {
    pub fn new(id: ServerId) -> Self {
        Node {
            id,
            peers: BTreeMap::new(),
            election_deadline: 0,
            frozen_until: 0,
            round: None,
            rounds: 0,
            config_request_until: 0,
            pull_until: 0,
            progress: BTreeMap::new(),
            commit: None,
        }
    }

    fn frozen(&self, now: u64) -> bool {
        now < self.frozen_until
    }

    /// The primary with the highest advertised term, if any peer claims to be one.
    fn believed_primary(&self) -> Option<ServerId> {
        self.peers
            .iter()
            .filter(|(_, v)| v.is_primary)
            .max_by_key(|(id, v)| (v.term, std::cmp::Reverse(**id)))
            .map(|(&id, _)| id)
    }

    fn step_down(&mut self) {
        self.progress.clear();
        self.commit = None;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum StepState {
    Idle,
    /// Oplog backend: waiting for the no-op at `(index, term)` on `primary` to commit.
    AwaitNoop {
        primary: ServerId,
        index: u32,
        term: Term,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Plan {
    steps: Vec<MemberSet>,
    next: usize,
    state: StepState,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) struct Controller {
    spec: ControllerSpec,
    /// A new fault replaces whatever plan is still unfinished.
    plan: Option<Plan>,
    ticking: bool,
}

impl Controller {
    pub fn new(spec: ControllerSpec) -> Self {
        Controller {
            spec,
            plan: None,
            ticking: false,
        }
    }
}

impl SimState {
    pub(super) fn handle(&mut self, event: Event) {
        match event {
            Event::Deliver(msg) => self.on_deliver(msg),
            Event::Heartbeat(id) => self.on_heartbeat_timer(id),
            Event::ElectionTimer(id) => self.on_election_timer(id),
            Event::RoundDeadline(id, round) => {
                let node = self.node_mut(id);
                if node.round.as_ref().is_some_and(|r| r.id == round) {
                    node.round = None;
                    node.frozen_until = 0;
                }
            }
            Event::PullTimer(id) => self.on_pull_timer(id),
            Event::FaultStart(k) => self.on_fault_start(k),
            Event::FaultEnd(k) => self.on_fault_end(k),
            Event::ClientWrite => self.on_client_write(),
            Event::WriteTimeout(id) => self.on_write_timeout(id),
            Event::ControllerPlan(k) => self.on_controller_plan(k),
            Event::ControllerTick => self.on_controller_tick(),
            Event::RandomReconfig => self.on_random_reconfig(),
        }
    }

    /// Defers a timer of a paused node to the end of its pause.
    fn defer_if_paused(&mut self, id: ServerId, event: &Event, kinds: &[FaultKind]) -> bool {
        let until = kinds.iter().filter_map(|&k| self.paused_until(id, k)).max();
        match until {
            Some(end) => {
                self.schedule(end, event.clone());
                true
            }
            None => false,
        }
    }

    fn true_state(&self, id: ServerId) -> &crate::protocol::ServerState {
        self.global.server(id).expect("node of the universe")
    }

    /// Applies `action` and clears the primary-only knowledge of any server it demoted.
    fn apply_as(&mut self, action: Action) -> bool {
        let before: Vec<bool> = self.global.servers().map(|(_, s)| s.is_primary()).collect();
        let applied = self.apply(action);
        if applied {
            let ids: Vec<_> = self.global.server_ids().collect();
            for (k, id) in ids.into_iter().enumerate() {
                if before[k] && !self.true_state(id).is_primary() {
                    self.node_mut(id).step_down();
                }
            }
        }
        applied
    }

    fn on_heartbeat_timer(&mut self, id: ServerId) {
        let event = Event::Heartbeat(id);
        if self.defer_if_paused(id, &event, &[FaultKind::PauseNode]) {
            return;
        }
        self.broadcast_heartbeat(id);
        self.schedule(self.now + self.cfg.heartbeat_interval_ms, event);
    }

    fn broadcast_heartbeat(&mut self, id: ServerId) {
        let s = self.true_state(id);
        let payload = Payload::Heartbeat {
            term: s.term,
            config_version: s.config.version,
            config_term: s.config.term,
            is_primary: s.is_primary(),
            log_len: s.log.len() as u32,
            last_term: s.log.last_term(),
        };
        let peers: Vec<_> = self.cfg.universe.without(id).iter().collect();
        for to in peers {
            self.send(id, to, payload.clone());
        }
    }

    fn on_election_timer(&mut self, id: ServerId) {
        let event = Event::ElectionTimer(id);
        if self.defer_if_paused(id, &event, &[FaultKind::PauseNode]) {
            return;
        }
        let deadline = self.node(id).election_deadline;
        if self.now < deadline {
            self.schedule(deadline, event);
            return;
        }
        let s = self.true_state(id);
        let eligible = !s.is_primary()
            && s.config.members.contains(id)
            && !self.node(id).frozen(self.now)
            && self.node(id).round.is_none();
        if eligible {
            self.start_election(id);
        }
        let next = self.election_timeout();
        self.node_mut(id).election_deadline = next;
        self.schedule(next, event);
    }

    fn start_election(&mut self, id: ServerId) {
        let s = self.true_state(id).clone();
        let term = s.term + 1;
        let round_end = self.now + self.cfg.round_ms();
        let node = self.node_mut(id);
        node.rounds += 1;
        let round = node.rounds;
        node.round = Some(Round {
            id: round,
            term,
            votes: MemberSet::EMPTY,
        });
        node.frozen_until = round_end;
        self.stats.elections_started += 1;
        self.log(EventKind::ElectionStarted { node: id, term });
        self.schedule(round_end, Event::RoundDeadline(id, round));
        let payload = Payload::VoteRequest {
            term,
            last_log_term: s.log.last_term(),
            log_len: s.log.len() as u32,
            config_version: s.config.version,
            config_term: s.config.term,
        };
        for to in s.config.members.without(id).iter() {
            self.send(id, to, payload.clone());
        }
        self.try_win(id);
    }

    fn try_win(&mut self, id: ServerId) {
        let Some(round) = self.node(id).round.clone() else {
            return;
        };
        let s = self.true_state(id);
        let (members, term) = (s.config.members, s.term);
        let quorum = round.votes.with(id).intersection(members);
        if !is_quorum(quorum, members) {
            return;
        }
        let node = self.node_mut(id);
        node.round = None;
        node.frozen_until = 0;
        if round.term != term + 1 {
            return;
        }
        if !self.apply_as(Action::BecomeLeader { actor: id, quorum }) {
            return;
        }
        self.stats.elections_won += 1;
        let node = self.node_mut(id);
        node.progress.clear();
        node.commit = None;
        self.broadcast_heartbeat(id);
        self.apply_as(Action::ClientRequest { actor: id });
    }

    fn on_deliver(&mut self, msg: Message) {
        let to = msg.to;
        if self.paused_until(to, FaultKind::PauseNode).is_some() {
            self.stats.messages_dropped += 1;
            return;
        }
        if msg.payload.is_replication() {
            if let Some(end) = self.paused_until(to, FaultKind::PauseReplication) {
                self.schedule(end, Event::Deliver(msg));
                return;
            }
        }
        let from = msg.from;
        match msg.payload {
            Payload::Heartbeat {
                term,
                config_version,
                config_term,
                is_primary,
                log_len,
                last_term,
            } => {
                let view = PeerView {
                    term,
                    config_version,
                    config_term,
                    is_primary,
                    log_len,
                    last_term,
                };
                self.on_heartbeat(to, from, view);
            }
            Payload::ConfigRequest => {
                let config = self.true_state(to).config;
                self.send(to, from, Payload::ConfigTransfer { config });
            }
            Payload::ConfigTransfer { config } => self.on_config_transfer(to, from, config),
            Payload::VoteRequest {
                term,
                last_log_term,
                log_len,
                config_version,
                config_term,
            } => {
                let me = self.true_state(to);
                let config_ok =
                    (config_term, config_version) >= (me.config.term, me.config.version);
                let log_ok =
                    (last_log_term, log_len as usize) >= (me.log.last_term(), me.log.len());
                let granted =
                    !self.node(to).frozen(self.now) && term > me.term && config_ok && log_ok;
                if granted {
                    self.node_mut(to).frozen_until = self.now + self.cfg.promise_ms();
                }
                self.send(to, from, Payload::VoteResponse { granted, term });
            }
            Payload::VoteResponse { granted, term } => {
                let node = self.node_mut(to);
                if let Some(round) = node.round.as_mut() {
                    if granted && round.term == term {
                        round.votes.insert(from);
                        self.try_win(to);
                    }
                }
            }
            Payload::EntriesPull {
                log_len,
                last_term,
                term,
            } => self.on_pull(
                to,
                from,
                Progress {
                    log_len,
                    last_term,
                    term,
                },
            ),
            Payload::EntriesPush { entry, at_index } => {
                self.node_mut(to).pull_until = 0;
                let me = self.true_state(to);
                let fresh = self.true_state(from).log.term_at(at_index as usize) == Some(entry)
                    && me.log.len() + 1 == at_index as usize;
                if !self.node(to).frozen(self.now)
                    && fresh
                    && self.apply_as(Action::GetEntries {
                        sender: from,
                        receiver: to,
                    })
                {
                    self.send_pull(to, from);
                }
            }
            Payload::RollbackNotice => {
                self.node_mut(to).pull_until = 0;
                if !self.node(to).frozen(self.now)
                    && self.apply_as(Action::RollbackEntries {
                        sender: from,
                        receiver: to,
                    })
                {
                    self.send_pull(to, from);
                }
            }
            Payload::TermUpdate { term } => self.adopt_term(to, from, term),
        }
    }

    fn adopt_term(&mut self, me: ServerId, from: ServerId, term: Term) {
        if self.node(me).frozen(self.now)
            || term <= self.true_state(me).term
            || self.true_state(from).term != term
        {
            return;
        }
        self.apply_as(Action::UpdateTerms {
            sender: from,
            receiver: me,
        });
    }

    fn on_heartbeat(&mut self, me: ServerId, from: ServerId, view: PeerView) {
        self.node_mut(me).peers.insert(from, view);
        let my_term = self.true_state(me).term;
        if view.term > my_term {
            self.adopt_term(me, from, view.term);
        } else if view.term < my_term {
            self.send(me, from, Payload::TermUpdate { term: my_term });
        }
        let s = self.true_state(me).clone();
        if view.is_primary && view.term >= s.term {
            let next = self.election_timeout();
            self.node_mut(me).election_deadline = next;
        }
        let advertised = (view.config_term, view.config_version);
        let node = self.node(me);
        if !s.is_primary()
            && !node.frozen(self.now)
            && advertised > (s.config.term, s.config.version)
            && node.config_request_until <= self.now
        {
            self.node_mut(me).config_request_until = self.now + self.cfg.round_ms();
            self.send(me, from, Payload::ConfigRequest);
        }
        if s.is_primary() {
            let progress = Progress {
                log_len: view.log_len,
                last_term: view.last_term,
                term: view.term,
            };
            self.node_mut(me).progress.insert(from, progress);
            self.try_commit(me);
        }
    }

    fn on_config_transfer(&mut self, me: ServerId, from: ServerId, config: Config) {
        self.node_mut(me).config_request_until = 0;
        let s = self.true_state(me);
        let newer = (config.term, config.version) > (s.config.term, s.config.version);
        if self.node(me).frozen(self.now)
            || s.is_primary()
            || !newer
            || self.true_state(from).config != config
        {
            return;
        }
        self.apply_as(Action::SendConfig {
            sender: from,
            receiver: me,
        });
    }

    fn on_pull_timer(&mut self, id: ServerId) {
        let event = Event::PullTimer(id);
        if self.defer_if_paused(
            id,
            &event,
            &[FaultKind::PauseNode, FaultKind::PauseReplication],
        ) {
            return;
        }
        self.schedule(self.now + self.cfg.pull_interval_ms, event);
        let node = self.node(id);
        if self.true_state(id).is_primary() || node.frozen(self.now) || node.pull_until > self.now {
            return;
        }
        if let Some(source) = self.sync_source(id) {
            self.send_pull(id, source);
        }
    }

    /// The believed primary, or else the peer advertising the most up-to-date log.
    fn sync_source(&self, id: ServerId) -> Option<ServerId> {
        let node = self.node(id);
        if let Some(p) = node.believed_primary() {
            return Some(p);
        }
        let me = self.true_state(id);
        let mine = (me.log.last_term(), me.log.len() as u32);
        node.peers
            .iter()
            .filter(|(_, v)| (v.last_term, v.log_len) > mine)
            .max_by_key(|(pid, v)| (v.last_term, v.log_len, std::cmp::Reverse(**pid)))
            .map(|(&pid, _)| pid)
    }

    fn send_pull(&mut self, me: ServerId, source: ServerId) {
        let s = self.true_state(me);
        let payload = Payload::EntriesPull {
            log_len: s.log.len() as u32,
            last_term: s.log.last_term(),
            term: s.term,
        };
        self.node_mut(me).pull_until = self.now + self.cfg.round_ms();
        self.send(me, source, payload);
    }

    fn on_pull(&mut self, me: ServerId, from: ServerId, progress: Progress) {
        let s = self.true_state(me);
        let is_primary = s.is_primary();
        let theirs = progress.log_len as usize;
        let agrees = theirs == 0 || s.log.term_at(theirs) == progress.last_term;
        let reply = if s.log.len() > theirs && agrees {
            Some(Payload::EntriesPush {
                entry: s.log.term_at(theirs + 1).expect("longer log"),
                at_index: progress.log_len + 1,
            })
        } else if progress.last_term < s.log.last_term() && !(theirs <= s.log.len() && agrees) {
            Some(Payload::RollbackNotice)
        } else {
            None
        };
        if let Some(reply) = reply {
            self.send(me, from, reply);
        }
        if is_primary {
            self.node_mut(me).progress.insert(from, progress);
            self.try_commit(me);
        }
    }

    /// Commits the primary's last entry once a quorum reports holding it in its term.
    fn try_commit(&mut self, p: ServerId) {
        let s = self.true_state(p);
        let (len, term, members) = (s.log.len() as u32, s.term, s.config.members);
        if len == 0 || s.log.last_term() != Some(term) || self.node(p).commit == Some((len, term)) {
            return;
        }
        let target = Progress {
            log_len: len,
            last_term: Some(term),
            term,
        };
        let holders: MemberSet = self
            .node(p)
            .progress
            .iter()
            .filter(|(_, pr)| **pr == target)
            .map(|(&id, _)| id)
            .collect();
        let quorum = holders.with(p).intersection(members);
        if !is_quorum(quorum, members) {
            return;
        }
        if self.apply_as(Action::CommitEntry { actor: p, quorum }) {
            self.node_mut(p).commit = Some((len, term));
            self.acknowledge_writes(p, len, term);
        }
    }

    fn acknowledge_writes(&mut self, p: ServerId, len: u32, term: Term) {
        let done: Vec<u64> = self
            .pending_writes
            .iter()
            .filter(|(_, w)| w.node == p && w.entry.is_some_and(|(i, t)| t == term && i <= len))
            .map(|(&id, _)| id)
            .collect();
        for id in done {
            let w = self.pending_writes.remove(&id).expect("pending write");
            let (index, term) = w.entry.expect("accepted write");
            self.observer.acknowledge(&self.global, index, term);
            let latency_ms = self.now - w.issued_at_ms;
            self.stats.writes_committed += 1;
            self.log(EventKind::WriteCommitted { id, latency_ms });
            self.writes.push(WriteRecord {
                id,
                issued_at_ms: w.issued_at_ms,
                completed_at_ms: self.now,
                outcome: WriteOutcome::Committed,
            });
        }
    }

    fn on_fault_start(&mut self, k: usize) {
        let fault = self.faults.faults[k].clone();
        let servers = self.resolve_target(&fault.target);
        self.active_faults.insert(
            k,
            super::ActiveFault {
                kind: fault.kind,
                servers,
                end_ms: fault.end_ms,
            },
        );
        self.log(EventKind::FaultStarted {
            fault: k,
            kind: fault.kind,
            servers,
        });
        if let (FaultKind::PauseReplication, Some(c)) = (fault.kind, &self.controller) {
            let at = self.now + c.spec.detection_delay_ms;
            self.schedule(at, Event::ControllerPlan(k));
        }
    }

    fn on_fault_end(&mut self, k: usize) {
        let Some(fault) = self.active_faults.remove(&k) else {
            return;
        };
        self.log(EventKind::FaultEnded { fault: k });
        if fault.kind == FaultKind::PauseNode {
            for id in fault.servers.iter() {
                let next = self.election_timeout();
                self.node_mut(id).election_deadline = next;
            }
        }
    }

    fn on_client_write(&mut self) {
        let Some(w) = self.workload.clone() else {
            return;
        };
        self.schedule(self.now + w.write_period_ms, Event::ClientWrite);
        let id = self.next_write_id;
        self.next_write_id += 1;
        self.stats.writes_issued += 1;
        self.schedule(self.now + w.write_timeout_ms, Event::WriteTimeout(id));
        let target = self.current_primary().filter(|&p| {
            self.paused_until(p, FaultKind::PauseNode).is_none() && !self.node(p).frozen(self.now)
        });
        let mut pending = PendingWrite {
            issued_at_ms: self.now,
            node: target.unwrap_or(self.cfg.m_init.iter().next().expect("non-empty")),
            entry: None,
        };
        match target {
            Some(p) if self.apply_as(Action::ClientRequest { actor: p }) => {
                let s = self.true_state(p);
                let (index, term) = (s.log.len() as u32, s.term);
                pending.entry = Some((index, term));
                self.log(EventKind::WriteIssued {
                    id,
                    node: p,
                    index,
                    term,
                });
            }
            _ => self.log(EventKind::WriteRejected { id }),
        }
        self.pending_writes.insert(id, pending);
    }

    fn on_write_timeout(&mut self, id: u64) {
        let Some(w) = self.pending_writes.remove(&id) else {
            return;
        };
        self.stats.writes_timed_out += 1;
        self.log(EventKind::WriteTimedOut { id });
        self.writes.push(WriteRecord {
            id,
            issued_at_ms: w.issued_at_ms,
            completed_at_ms: self.now,
            outcome: WriteOutcome::Timeout,
        });
    }

    /// Swaps the degraded voters of fault `k` for healthy standbys, one change at a time.
    fn on_controller_plan(&mut self, k: usize) {
        let Some(fault) = self.active_faults.get(&k).cloned() else {
            return;
        };
        let Some(p) = self.current_primary() else {
            return;
        };
        let members = self.true_state(p).config.members;
        let degraded: Vec<_> = fault
            .servers
            .intersection(members)
            .without(p)
            .iter()
            .collect();
        let unhealthy: MemberSet = self
            .active_faults
            .values()
            .fold(MemberSet::EMPTY, |acc, f| acc.union(f.servers));
        let standbys: Vec<_> = self
            .cfg
            .universe
            .difference(members)
            .difference(unhealthy)
            .iter()
            .take(degraded.len())
            .collect();
        if standbys.len() < degraded.len() {
            return;
        }
        let mut steps = Vec::new();
        let mut current = members;
        for (&x, &a) in degraded.iter().zip(&standbys) {
            current = current.with(a);
            steps.push(current);
            current = current.without(x);
            steps.push(current);
        }
        let mut prev = members;
        for &step in &steps {
            if !quorums_overlap(prev, step).unwrap_or(false) {
                return;
            }
            prev = step;
        }
        self.log(EventKind::ReconfigPlanned {
            steps: steps.clone(),
        });
        let c = self
            .controller
            .as_mut()
            .expect("controller plans only when present");
        c.plan = Some(Plan {
            steps,
            next: 0,
            state: StepState::Idle,
        });
        if !c.ticking {
            c.ticking = true;
            self.schedule(self.now, Event::ControllerTick);
        }
    }

    fn on_controller_tick(&mut self) {
        let Some(mut c) = self.controller.take() else {
            return;
        };
        if let Some(mut plan) = c.plan.take() {
            if !self.advance_plan(&mut plan, c.spec.backend) {
                c.plan = Some(plan);
            }
        }
        c.ticking = c.plan.is_some();
        if c.ticking {
            self.schedule(self.now + c.spec.tick_ms, Event::ControllerTick);
        }
        self.controller = Some(c);
    }

    /// Moves the plan forward by at most one action; true once every step is in place.
    fn advance_plan(&mut self, plan: &mut Plan, backend: ReconfigBackend) -> bool {
        let Some(p) = self.current_primary() else {
            return false;
        };
        let target = plan.steps[plan.next];
        let s = self.true_state(p).clone();
        if s.config.members == target {
            if !self.config_settled(&s.config) {
                return false;
            }
            self.stats.reconfigs_completed += 1;
            self.log(EventKind::ReconfigCompleted { members: target });
            plan.next += 1;
            plan.state = StepState::Idle;
            return plan.next == plan.steps.len();
        }
        if self.node(p).frozen(self.now) || self.paused_until(p, FaultKind::PauseNode).is_some() {
            return false;
        }
        match backend {
            ReconfigBackend::Logless => {
                self.try_reconfig(p, target);
            }
            ReconfigBackend::RaftOplog => match plan.state {
                StepState::AwaitNoop {
                    primary,
                    index,
                    term,
                } if primary == p && term == s.term => {
                    let committed = self
                        .node(p)
                        .commit
                        .is_some_and(|(i, t)| t == term && i >= index);
                    if committed && self.try_reconfig(p, target) {
                        plan.state = StepState::Idle;
                    }
                }
                _ => {
                    if self.apply_as(Action::ClientRequest { actor: p }) {
                        let s = self.true_state(p);
                        plan.state = StepState::AwaitNoop {
                            primary: p,
                            index: s.log.len() as u32,
                            term: s.term,
                        };
                    }
                }
            },
        }
        false
    }

    /// Whether a quorum of the config's members holds exactly this config.
    fn config_settled(&self, config: &Config) -> bool {
        let same: MemberSet = self
            .global
            .servers()
            .filter(|(_, s)| (s.config.version, s.config.term) == (config.version, config.term))
            .map(|(id, _)| id)
            .collect();
        some_quorum_within(config.members, same)
    }

    /// The primary installs `members` if its own view of its peers allows it.
    fn try_reconfig(&mut self, p: ServerId, members: MemberSet) -> bool {
        let s = self.true_state(p).clone();
        let node = self.node(p);
        let same_config: MemberSet = node
            .peers
            .iter()
            .filter(|(_, v)| (v.config_version, v.config_term) == (s.config.version, s.config.term))
            .map(|(&id, _)| id)
            .collect();
        let same_term: MemberSet = node
            .peers
            .iter()
            .filter(|(_, v)| v.term == s.term)
            .map(|(&id, _)| id)
            .collect();
        let committed_in_term = node.commit.filter(|&(_, t)| t == s.term);
        let ready = match committed_in_term {
            Some((index, term)) => {
                let holders: MemberSet = node
                    .progress
                    .iter()
                    .filter(|(_, pr)| {
                        pr.term == term && pr.last_term == Some(term) && pr.log_len >= index
                    })
                    .map(|(&id, _)| id)
                    .collect();
                some_quorum_within(s.config.members, holders.with(p))
            }
            None => false,
        };
        if !ready
            || !some_quorum_within(s.config.members, same_config.with(p))
            || !some_quorum_within(s.config.members, same_term.with(p))
        {
            return false;
        }
        self.apply_as(Action::Reconfig { actor: p, members })
    }

    fn on_random_reconfig(&mut self) {
        let Some(period) = self
            .workload
            .as_ref()
            .and_then(|w| w.random_reconfig_period_ms)
        else {
            return;
        };
        self.schedule(self.now + period, Event::RandomReconfig);
        let Some(p) = self.current_primary() else {
            return;
        };
        let members = self.true_state(p).config.members;
        let candidates: Vec<MemberSet> = self
            .cfg
            .universe
            .iter()
            .filter(|&id| id != p)
            .map(|id| {
                if members.contains(id) {
                    members.without(id)
                } else {
                    members.with(id)
                }
            })
            .filter(|&m| quorums_overlap(members, m).unwrap_or(false))
            .collect();
        if candidates.is_empty() {
            return;
        }
        let pick = candidates[self.rng.gen_range(0..candidates.len())];
        self.try_reconfig(p, pick);
    }
}

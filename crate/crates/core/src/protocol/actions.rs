use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::quorum::{is_quorum, overlap, some_quorum_within};
use super::{
    CommittedEntry, Config, GlobalState, Log, MemberSet, Role, ServerId, ServerState, Term,
};

/// Why an action could not be taken. Guard failures leave the state untouched.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum GuardError {
    #[error("server is not primary")]
    NotPrimary,
    #[error("no quorum of the current config shares its version and term")]
    Q1Failed,
    #[error("no quorum of the current config is in the primary's term")]
    Q2Failed,
    #[error("entries committed in the current term are not committed on a quorum")]
    P1Failed,
    #[error("quorums of the current and new member sets do not overlap")]
    OverlapFailed,
    #[error("receiver is not secondary")]
    ReceiverNotSecondary,
    #[error("sender config is not newer than receiver config")]
    ConfigNotNewer,
    #[error("member set is not a quorum of the actor's config")]
    NotAQuorum,
    #[error("candidate is not part of its voting quorum")]
    CandidateNotInQuorum,
    #[error("a voter holds a newer config than the candidate")]
    VoterHasNewerConfig,
    #[error("a voter is already at or past the candidate's new term")]
    VoterTermTooHigh,
    #[error("a voter's log is more up to date than the candidate's")]
    VoterLogAhead,
    #[error("sender term is not greater than receiver term")]
    TermNotGreater,
    #[error("server is not secondary")]
    NotSecondary,
    #[error("log consistency check against the source failed")]
    LogCheckFailed,
    #[error("log cannot be rolled back against the source")]
    CannotRollback,
    #[error("the primary's last entry is not replicated on the quorum in its term")]
    NotReplicatedOnQuorum,
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("member set must be non-empty")]
    EmptyMemberSet,
    #[error("member set {0} is not within the server universe")]
    OutsideUniverse(MemberSet),
    #[error("server id {0} is out of range")]
    ServerIdOutOfRange(u8),
    #[error("malformed server name {0:?}")]
    BadServerName(String),
}

/// Result of ordering two configs by `(term, version)`, term first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigOrdering {
    Older,
    Equal,
    Newer,
}

/// Where `c1` stands relative to `c2`. Member sets are ignored.
pub fn compare_configs(c1: &Config, c2: &Config) -> ConfigOrdering {
    match (c1.term, c1.version).cmp(&(c2.term, c2.version)) {
        Ordering::Less => ConfigOrdering::Older,
        Ordering::Equal => ConfigOrdering::Equal,
        Ordering::Greater => ConfigOrdering::Newer,
    }
}

pub(crate) fn newer(c1: &Config, c2: &Config) -> bool {
    compare_configs(c1, c2) == ConfigOrdering::Newer
}

pub(crate) fn same_version_term(c1: &Config, c2: &Config) -> bool {
    (c1.version, c1.term) == (c2.version, c2.term)
}

/// Whether `a`'s log is at least as up to date as `b`'s: later last term wins,
/// equal last terms compare by length. An empty log has the lowest last term.
pub fn log_geq(a: &ServerState, b: &ServerState) -> bool {
    (a.log.last_term(), a.log.len()) >= (b.log.last_term(), b.log.len())
}

/// Which guards are enforced. The standard rule set is [`Rules::FULL`];
/// [`Rules::LOGLESS`] drops the log-dependent guards for the config-only subprotocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rules {
    pub(crate) config_quorum_check: bool,
    pub(crate) term_quorum_check: bool,
    pub(crate) oplog_commitment: bool,
    pub(crate) config_vote_check: bool,
    pub(crate) config_term_rewrite: bool,
    pub(crate) log_vote_check: bool,
}

impl Rules {
    pub const FULL: Rules = Rules {
        config_quorum_check: true,
        term_quorum_check: true,
        oplog_commitment: true,
        config_vote_check: true,
        config_term_rewrite: true,
        log_vote_check: true,
    };

    pub const LOGLESS: Rules = Rules {
        oplog_commitment: false,
        log_vote_check: false,
        ..Rules::FULL
    };

    /// The same rules with one safety guard switched off.
    #[cfg(feature = "mutations")]
    pub fn mutated(mut self, mutation: Mutation) -> Rules {
        match mutation {
            Mutation::DropQ1 => self.config_quorum_check = false,
            Mutation::DropQ2 => self.term_quorum_check = false,
            Mutation::DropP1 => self.oplog_commitment = false,
            Mutation::DropConfigVoteCheck => self.config_vote_check = false,
            Mutation::DropConfigTermRewrite => self.config_term_rewrite = false,
        }
        self
    }
}

impl Default for Rules {
    fn default() -> Self {
        Rules::FULL
    }
}

/// A deliberately unsafe protocol variant, for checking that exploration catches it.
#[cfg(feature = "mutations")]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    DropQ1,
    DropQ2,
    DropP1,
    DropConfigVoteCheck,
    DropConfigTermRewrite,
}

#[cfg(feature = "mutations")]
impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::DropQ1,
        Mutation::DropQ2,
        Mutation::DropP1,
        Mutation::DropConfigVoteCheck,
        Mutation::DropConfigTermRewrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mutation::DropQ1 => "drop-q1",
            Mutation::DropQ2 => "drop-q2",
            Mutation::DropP1 => "drop-p1",
            Mutation::DropConfigVoteCheck => "drop-config-vote-check",
            Mutation::DropConfigTermRewrite => "drop-config-term-rewrite",
        }
    }
}

#[cfg(feature = "mutations")]
impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mutation {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Reconfig,
    SendConfig,
    BecomeLeader,
    UpdateTerms,
    ClientRequest,
    GetEntries,
    RollbackEntries,
    CommitEntry,
}

impl ActionKind {
    /// Whether the action belongs to the config-only subprotocol.
    pub fn is_logless(self) -> bool {
        matches!(
            self,
            ActionKind::Reconfig
                | ActionKind::SendConfig
                | ActionKind::BecomeLeader
                | ActionKind::UpdateTerms
        )
    }
}

/// One protocol step with its arguments.
///
/// For the two-server actions, `receiver` is the server whose state changes
/// and `sender` is the server it reads from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args")]
pub enum Action {
    Reconfig {
        actor: ServerId,
        members: MemberSet,
    },
    SendConfig {
        sender: ServerId,
        receiver: ServerId,
    },
    BecomeLeader {
        actor: ServerId,
        quorum: MemberSet,
    },
    UpdateTerms {
        sender: ServerId,
        receiver: ServerId,
    },
    ClientRequest {
        actor: ServerId,
    },
    GetEntries {
        sender: ServerId,
        receiver: ServerId,
    },
    RollbackEntries {
        sender: ServerId,
        receiver: ServerId,
    },
    CommitEntry {
        actor: ServerId,
        quorum: MemberSet,
    },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Reconfig { .. } => ActionKind::Reconfig,
            Action::SendConfig { .. } => ActionKind::SendConfig,
            Action::BecomeLeader { .. } => ActionKind::BecomeLeader,
            Action::UpdateTerms { .. } => ActionKind::UpdateTerms,
            Action::ClientRequest { .. } => ActionKind::ClientRequest,
            Action::GetEntries { .. } => ActionKind::GetEntries,
            Action::RollbackEntries { .. } => ActionKind::RollbackEntries,
            Action::CommitEntry { .. } => ActionKind::CommitEntry,
        }
    }

    /// Applies the action under the standard rules.
    pub fn apply(&self, g: &GlobalState) -> Result<GlobalState, GuardError> {
        self.apply_with(g, &Rules::FULL)
    }

    pub fn apply_with(&self, g: &GlobalState, rules: &Rules) -> Result<GlobalState, GuardError> {
        self.check(g, rules)?;
        let mut next = g.clone();
        self.apply_in_place(&mut next, rules)?;
        Ok(next)
    }

    /// Evaluates the guards without building the successor.
    pub fn check(&self, g: &GlobalState, rules: &Rules) -> Result<(), GuardError> {
        match *self {
            Action::Reconfig { actor, members } => check_reconfig(g, actor, members, rules),
            Action::SendConfig { sender, receiver } => {
                check_send_config(g, sender, receiver).map(drop)
            }
            Action::BecomeLeader { actor, quorum } => check_become_leader(g, actor, quorum, rules),
            Action::UpdateTerms { sender, receiver } => {
                if g.server(sender)?.term > g.server(receiver)?.term {
                    Ok(())
                } else {
                    Err(GuardError::TermNotGreater)
                }
            }
            Action::ClientRequest { actor } => {
                if g.server(actor)?.is_primary() {
                    Ok(())
                } else {
                    Err(GuardError::NotPrimary)
                }
            }
            Action::GetEntries { sender, receiver } => {
                check_get_entries(g, receiver, sender).map(drop)
            }
            Action::RollbackEntries { sender, receiver } => check_rollback(g, receiver, sender),
            Action::CommitEntry { actor, quorum } => check_commit(g, actor, quorum).map(drop),
        }
    }

    /// Mutates `g` only when every guard passes.
    pub(crate) fn apply_in_place(
        &self,
        g: &mut GlobalState,
        rules: &Rules,
    ) -> Result<(), GuardError> {
        match *self {
            Action::Reconfig { actor, members } => {
                check_reconfig(g, actor, members, rules)?;
                let s = g.server_mut(actor)?;
                s.config.members = members;
                s.config.version += 1;
            }
            Action::SendConfig { sender, receiver } => {
                let config = check_send_config(g, sender, receiver)?;
                g.server_mut(receiver)?.config = config;
            }
            Action::BecomeLeader { actor, quorum } => {
                check_become_leader(g, actor, quorum, rules)?;
                let new_term = g.server(actor)?.term + 1;
                let universe = g.universe();
                for (id, s) in universe.iter().zip(g.servers_slice_mut()) {
                    if !quorum.contains(id) {
                        continue;
                    }
                    s.term = new_term;
                    if id == actor {
                        s.role = Role::Primary;
                        if rules.config_term_rewrite {
                            s.config.term = new_term;
                        }
                    } else {
                        s.role = Role::Secondary;
                    }
                }
            }
            Action::UpdateTerms { sender, receiver } => {
                let term = g.server(sender)?.term;
                let r = g.server(receiver)?;
                if term <= r.term {
                    return Err(GuardError::TermNotGreater);
                }
                let r = g.server_mut(receiver)?;
                r.term = term;
                r.role = Role::Secondary;
            }
            Action::ClientRequest { actor } => {
                let s = g.server_mut(actor)?;
                if !s.is_primary() {
                    return Err(GuardError::NotPrimary);
                }
                let term = s.term;
                s.log.push(term);
            }
            Action::GetEntries { sender, receiver } => {
                let entry = check_get_entries(g, receiver, sender)?;
                g.server_mut(receiver)?.log.push(entry);
            }
            Action::RollbackEntries { sender, receiver } => {
                check_rollback(g, receiver, sender)?;
                g.server_mut(receiver)?.log.pop();
            }
            Action::CommitEntry { actor, quorum } => {
                let entry = check_commit(g, actor, quorum)?;
                g.committed.insert(entry);
            }
        }
        Ok(())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Reconfig { actor, members } => write!(f, "Reconfig({actor}, {members})"),
            Action::SendConfig { sender, receiver } => {
                write!(f, "SendConfig({sender}, {receiver})")
            }
            Action::BecomeLeader { actor, quorum } => write!(f, "BecomeLeader({actor}, {quorum})"),
            Action::UpdateTerms { sender, receiver } => {
                write!(f, "UpdateTerms({sender}, {receiver})")
            }
            Action::ClientRequest { actor } => write!(f, "ClientRequest({actor})"),
            Action::GetEntries { sender, receiver } => {
                write!(f, "GetEntries({receiver}, {sender})")
            }
            Action::RollbackEntries { sender, receiver } => {
                write!(f, "RollbackEntries({receiver}, {sender})")
            }
            Action::CommitEntry { actor, quorum } => write!(f, "CommitEntry({actor}, {quorum})"),
        }
    }
}

fn check_member_set(g: &GlobalState, m: MemberSet) -> Result<(), GuardError> {
    if m.is_empty() {
        return Err(GuardError::EmptyMemberSet);
    }
    if !m.is_subset(g.universe()) {
        return Err(GuardError::OutsideUniverse(m));
    }
    Ok(())
}

/// Servers of the universe satisfying `pred`.
fn servers_where(g: &GlobalState, pred: impl Fn(&ServerState) -> bool) -> MemberSet {
    g.servers()
        .filter(|(_, s)| pred(s))
        .map(|(id, _)| id)
        .collect()
}

fn check_reconfig(
    g: &GlobalState,
    i: ServerId,
    m_new: MemberSet,
    rules: &Rules,
) -> Result<(), GuardError> {
    check_member_set(g, m_new)?;
    let me = g.server(i)?;
    if !me.is_primary() {
        return Err(GuardError::NotPrimary);
    }
    let m = me.config.members;
    if rules.config_quorum_check {
        let same = servers_where(g, |s| same_version_term(&s.config, &me.config));
        if !some_quorum_within(m, same) {
            return Err(GuardError::Q1Failed);
        }
    }
    if rules.term_quorum_check {
        let in_term = servers_where(g, |s| s.term == me.term);
        if !some_quorum_within(m, in_term) {
            return Err(GuardError::Q2Failed);
        }
    }
    if rules.oplog_commitment && !oplog_commitment(g, me) {
        return Err(GuardError::P1Failed);
    }
    if !overlap(m, m_new) {
        return Err(GuardError::OverlapFailed);
    }
    Ok(())
}

/// P1: something is committed in the current term (or nothing at all), and
/// some quorum holds every entry committed in that term while being in it.
fn oplog_commitment(g: &GlobalState, me: &ServerState) -> bool {
    let term = me.term;
    let committed_now: Vec<CommittedEntry> = g
        .committed
        .iter()
        .filter(|c| c.term == term)
        .copied()
        .collect();
    let p1a = g.committed.is_empty() || !committed_now.is_empty();
    if !p1a {
        return false;
    }
    let holders = servers_where(g, |s| {
        committed_now
            .iter()
            .all(|c| s.log.contains(c.index as usize, term) && s.term == term)
    });
    some_quorum_within(me.config.members, holders)
}

/// The checks of `Reconfig`, in the order they are reported.
pub fn reconfig_enabled(g: &GlobalState, i: ServerId, m_new: MemberSet) -> Result<(), GuardError> {
    check_reconfig(g, i, m_new, &Rules::FULL)
}

fn check_send_config(g: &GlobalState, i: ServerId, j: ServerId) -> Result<Config, GuardError> {
    let sender = g.server(i)?;
    let receiver = g.server(j)?;
    if receiver.role != Role::Secondary {
        return Err(GuardError::ReceiverNotSecondary);
    }
    if !newer(&sender.config, &receiver.config) {
        return Err(GuardError::ConfigNotNewer);
    }
    Ok(sender.config)
}

fn check_become_leader(
    g: &GlobalState,
    i: ServerId,
    q: MemberSet,
    rules: &Rules,
) -> Result<(), GuardError> {
    let me = g.server(i)?;
    if !is_quorum(q, me.config.members) {
        return Err(GuardError::NotAQuorum);
    }
    if !q.contains(i) {
        return Err(GuardError::CandidateNotInQuorum);
    }
    let voters: Vec<&ServerState> = q.iter().map(|v| g.server(v)).collect::<Result<_, _>>()?;
    if rules.config_vote_check && voters.iter().any(|v| newer(&v.config, &me.config)) {
        return Err(GuardError::VoterHasNewerConfig);
    }
    if voters.iter().any(|v| me.term < v.term) {
        return Err(GuardError::VoterTermTooHigh);
    }
    if rules.log_vote_check && voters.iter().any(|v| !log_geq(me, v)) {
        return Err(GuardError::VoterLogAhead);
    }
    Ok(())
}

/// `LogCheck(i, j)`: `j`'s log is longer and agrees with `i`'s at `i`'s last index.
fn log_check(i: &Log, j: &Log) -> bool {
    j.len() > i.len() && (i.is_empty() || i.last_term() == j.term_at(i.len()))
}

/// `CanRollback(i, j)`.
fn can_rollback(i: &Log, j: &Log) -> bool {
    i.last_term() < j.last_term() && !i.is_prefix_of(j)
}

fn check_get_entries(g: &GlobalState, i: ServerId, j: ServerId) -> Result<Term, GuardError> {
    let receiver = g.server(i)?;
    let source = g.server(j)?;
    if receiver.role != Role::Secondary {
        return Err(GuardError::NotSecondary);
    }
    if !log_check(&receiver.log, &source.log) {
        return Err(GuardError::LogCheckFailed);
    }
    Ok(source
        .log
        .term_at(receiver.log.len() + 1)
        .expect("log check guarantees a longer source log"))
}

fn check_rollback(g: &GlobalState, i: ServerId, j: ServerId) -> Result<(), GuardError> {
    let receiver = g.server(i)?;
    let source = g.server(j)?;
    if receiver.role != Role::Secondary {
        return Err(GuardError::NotSecondary);
    }
    if !can_rollback(&receiver.log, &source.log) {
        return Err(GuardError::CannotRollback);
    }
    Ok(())
}

fn check_commit(g: &GlobalState, i: ServerId, q: MemberSet) -> Result<CommittedEntry, GuardError> {
    let me = g.server(i)?;
    if !is_quorum(q, me.config.members) {
        return Err(GuardError::NotAQuorum);
    }
    if !me.is_primary() {
        return Err(GuardError::NotPrimary);
    }
    let index = me.log.len();
    let term = me.term;
    for v in q.iter() {
        let s = g.server(v)?;
        if !(s.log.contains(index, term) && s.term == term) {
            return Err(GuardError::NotReplicatedOnQuorum);
        }
    }
    Ok(CommittedEntry::new(index as u32, term))
}

pub fn apply_reconfig(
    g: &GlobalState,
    i: ServerId,
    m_new: MemberSet,
) -> Result<GlobalState, GuardError> {
    Action::Reconfig {
        actor: i,
        members: m_new,
    }
    .apply(g)
}

pub fn apply_send_config(
    g: &GlobalState,
    i: ServerId,
    j: ServerId,
) -> Result<GlobalState, GuardError> {
    Action::SendConfig {
        sender: i,
        receiver: j,
    }
    .apply(g)
}

pub fn apply_become_leader(
    g: &GlobalState,
    i: ServerId,
    q: MemberSet,
) -> Result<GlobalState, GuardError> {
    Action::BecomeLeader {
        actor: i,
        quorum: q,
    }
    .apply(g)
}

pub fn apply_update_terms(
    g: &GlobalState,
    i: ServerId,
    j: ServerId,
) -> Result<GlobalState, GuardError> {
    Action::UpdateTerms {
        sender: i,
        receiver: j,
    }
    .apply(g)
}

pub fn apply_client_request(g: &GlobalState, i: ServerId) -> Result<GlobalState, GuardError> {
    Action::ClientRequest { actor: i }.apply(g)
}

/// `i` fetches the next entry from `j`.
pub fn apply_get_entries(
    g: &GlobalState,
    i: ServerId,
    j: ServerId,
) -> Result<GlobalState, GuardError> {
    Action::GetEntries {
        sender: j,
        receiver: i,
    }
    .apply(g)
}

/// `i` drops its last entry after comparing against `j`.
pub fn apply_rollback_entries(
    g: &GlobalState,
    i: ServerId,
    j: ServerId,
) -> Result<GlobalState, GuardError> {
    Action::RollbackEntries {
        sender: j,
        receiver: i,
    }
    .apply(g)
}

pub fn apply_commit_entry(
    g: &GlobalState,
    i: ServerId,
    q: MemberSet,
) -> Result<GlobalState, GuardError> {
    Action::CommitEntry {
        actor: i,
        quorum: q,
    }
    .apply(g)
}

/// Every server of `universe` at term 0, secondary, in config `(m_init, 1, 0)`, with an empty log.
pub fn initial_state(universe: MemberSet, m_init: MemberSet) -> Result<GlobalState, GuardError> {
    if universe.is_empty() || m_init.is_empty() {
        return Err(GuardError::EmptyMemberSet);
    }
    if !m_init.is_subset(universe) {
        return Err(GuardError::OutsideUniverse(m_init));
    }
    let server = ServerState {
        term: 0,
        role: Role::Secondary,
        config: Config::new(m_init, 1, 0),
        log: Log::new(),
    };
    Ok(GlobalState::from_parts(
        universe,
        vec![server; universe.len()],
        BTreeSet::new(),
    ))
}

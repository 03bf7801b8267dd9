//! Executable safety properties and auxiliary lemmas.
//!
//! Each checker transcribes one quantified statement over a [`GlobalState`]
//! (or over a pair of consecutive states) and reports the first violating
//! assignment found in a fixed enumeration order: servers by increasing id,
//! log indices ascending, quorums by increasing bitmask.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::protocol::{
    compare_configs, every_quorum_meets, newer, overlap, quorums, same_version_term,
    CommittedEntry, Config, ConfigOrdering, GlobalState, MemberSet, ServerId, ServerState,
};

/// Every checkable property, state properties first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InvariantId {
    ElectionSafety,
    LeaderCompleteness,
    LogMatching,
    PrimaryTermEqualsConfigTerm,
    ConfigVersionAndTermUnique,
    PrimaryContainsNewestConfigOfTerm,
    ActiveConfigsOverlap,
    ActiveConfigsSafeFromPastTerms,
    PrimaryTermAtLeastLogTerm,
    LogEntryTermsMonotonic,
    UniformLogEntriesInTerm,
    LogEntryInTermImpliesConfigInTerm,
    PrimaryHasEntriesItCreated,
    LogsLaterThanCommittedContainCommitted,
    ActiveConfigsOverlapWithCommitted,
    NewerConfigsDisableCommits,
    ConfigsIncreaseMonotonically,
    ConfigDeactivationStability,
}

impl InvariantId {
    pub const ALL: [InvariantId; 18] = [
        InvariantId::ElectionSafety,
        InvariantId::LeaderCompleteness,
        InvariantId::LogMatching,
        InvariantId::PrimaryTermEqualsConfigTerm,
        InvariantId::ConfigVersionAndTermUnique,
        InvariantId::PrimaryContainsNewestConfigOfTerm,
        InvariantId::ActiveConfigsOverlap,
        InvariantId::ActiveConfigsSafeFromPastTerms,
        InvariantId::PrimaryTermAtLeastLogTerm,
        InvariantId::LogEntryTermsMonotonic,
        InvariantId::UniformLogEntriesInTerm,
        InvariantId::LogEntryInTermImpliesConfigInTerm,
        InvariantId::PrimaryHasEntriesItCreated,
        InvariantId::LogsLaterThanCommittedContainCommitted,
        InvariantId::ActiveConfigsOverlapWithCommitted,
        InvariantId::NewerConfigsDisableCommits,
        InvariantId::ConfigsIncreaseMonotonically,
        InvariantId::ConfigDeactivationStability,
    ];

    /// The thirteen auxiliary state lemmas, in suite order.
    pub const STATE_LEMMAS: [InvariantId; 13] = [
        InvariantId::PrimaryTermEqualsConfigTerm,
        InvariantId::ConfigVersionAndTermUnique,
        InvariantId::PrimaryContainsNewestConfigOfTerm,
        InvariantId::ActiveConfigsOverlap,
        InvariantId::ActiveConfigsSafeFromPastTerms,
        InvariantId::PrimaryTermAtLeastLogTerm,
        InvariantId::LogEntryTermsMonotonic,
        InvariantId::UniformLogEntriesInTerm,
        InvariantId::LogEntryInTermImpliesConfigInTerm,
        InvariantId::PrimaryHasEntriesItCreated,
        InvariantId::LogsLaterThanCommittedContainCommitted,
        InvariantId::ActiveConfigsOverlapWithCommitted,
        InvariantId::NewerConfigsDisableCommits,
    ];

    pub const TRANSITION_LEMMAS: [InvariantId; 2] = [
        InvariantId::ConfigsIncreaseMonotonically,
        InvariantId::ConfigDeactivationStability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InvariantId::ElectionSafety => "election-safety",
            InvariantId::LeaderCompleteness => "leader-completeness",
            InvariantId::LogMatching => "log-matching",
            InvariantId::PrimaryTermEqualsConfigTerm => "primary-term-equals-config-term",
            InvariantId::ConfigVersionAndTermUnique => "config-version-and-term-unique",
            InvariantId::PrimaryContainsNewestConfigOfTerm => {
                "primary-contains-newest-config-of-term"
            }
            InvariantId::ActiveConfigsOverlap => "active-configs-overlap",
            InvariantId::ActiveConfigsSafeFromPastTerms => "active-configs-safe-from-past-terms",
            InvariantId::PrimaryTermAtLeastLogTerm => "primary-term-at-least-log-term",
            InvariantId::LogEntryTermsMonotonic => "log-entry-terms-monotonic",
            InvariantId::UniformLogEntriesInTerm => "uniform-log-entries-in-term",
            InvariantId::LogEntryInTermImpliesConfigInTerm => {
                "log-entry-in-term-implies-config-in-term"
            }
            InvariantId::PrimaryHasEntriesItCreated => "primary-has-entries-it-created",
            InvariantId::LogsLaterThanCommittedContainCommitted => {
                "logs-later-than-committed-contain-committed"
            }
            InvariantId::ActiveConfigsOverlapWithCommitted => {
                "active-configs-overlap-with-committed"
            }
            InvariantId::NewerConfigsDisableCommits => "newer-configs-disable-commits",
            InvariantId::ConfigsIncreaseMonotonically => "configs-increase-monotonically",
            InvariantId::ConfigDeactivationStability => "config-deactivation-stability",
        }
    }

    /// Whether the property relates two consecutive states rather than one.
    pub fn is_transition(self) -> bool {
        matches!(
            self,
            InvariantId::ConfigsIncreaseMonotonically | InvariantId::ConfigDeactivationStability
        )
    }

    /// Parses a comma-separated selection; `all` selects everything.
    pub fn parse_list(list: &str) -> Result<Vec<InvariantId>, UnknownInvariant> {
        let mut out = Vec::new();
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(InvariantId::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for InvariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown invariant `{0}`")]
pub struct UnknownInvariant(pub String);

impl FromStr for InvariantId {
    type Err = UnknownInvariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InvariantId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| UnknownInvariant(s.to_string()))
    }
}

impl Serialize for InvariantId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for InvariantId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The variables bound by a violating assignment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub servers: Vec<ServerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quorum: Option<MemberSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<CommittedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indices: Vec<u32>,
}

impl Witness {
    fn servers(servers: &[ServerId]) -> Self {
        Witness {
            servers: servers.to_vec(),
            ..Witness::default()
        }
    }

    fn quorum(mut self, q: MemberSet) -> Self {
        self.quorum = Some(q);
        self
    }

    fn entry(mut self, index: usize, term: u32) -> Self {
        self.entry = Some(CommittedEntry::new(index as u32, term));
        self
    }

    fn indices(mut self, indices: &[usize]) -> Self {
        self.indices = indices.iter().map(|&i| i as u32).collect();
        self
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<_> = self.servers.iter().map(ToString::to_string).collect();
        write!(f, "servers [{}]", ids.join(", "))?;
        if let Some(q) = self.quorum {
            write!(f, ", quorum {q}")?;
        }
        if let Some(e) = self.entry {
            write!(f, ", entry ({}, {})", e.index, e.term)?;
        }
        if !self.indices.is_empty() {
            write!(f, ", indices {:?}", self.indices)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub name: InvariantId,
    pub holds: bool,
    pub witnesses: Vec<Witness>,
}

impl InvariantReport {
    fn from_check(name: InvariantId, witness: Option<Witness>) -> Self {
        InvariantReport {
            name,
            holds: witness.is_none(),
            witnesses: witness.into_iter().collect(),
        }
    }
}

/// Whether every quorum of `c.m` contains a server whose config is newer than `c`.
pub fn is_deactivated(g: &GlobalState, c: &Config) -> bool {
    every_quorum_meets(c.members, newer_holders(g, c))
}

/// Servers whose current config is active.
pub fn active_config_set(g: &GlobalState) -> MemberSet {
    g.servers()
        .filter(|(_, s)| !is_deactivated(g, &s.config))
        .map(|(id, _)| id)
        .collect()
}

fn newer_holders(g: &GlobalState, c: &Config) -> MemberSet {
    g.servers()
        .filter(|(_, s)| newer(&s.config, c))
        .map(|(id, _)| id)
        .collect()
}

fn servers_where(g: &GlobalState, pred: impl Fn(&ServerState) -> bool) -> MemberSet {
    g.servers()
        .filter(|(_, s)| pred(s))
        .map(|(id, _)| id)
        .collect()
}

/// First quorum of `m`, by mask order, containing no member of `has`.
fn quorum_missing(m: MemberSet, has: MemberSet) -> Option<MemberSet> {
    if every_quorum_meets(m, has) {
        return None;
    }
    quorums(m)
        .ok()?
        .into_iter()
        .find(|q| q.intersection(has).is_empty())
}

fn in_log(s: &ServerState, index: u32, term: u32) -> bool {
    s.log.contains(index as usize, term)
}

/// Per-state context shared by the checkers so the active set is computed once.
struct View<'a> {
    g: &'a GlobalState,
    servers: Vec<(ServerId, &'a ServerState)>,
    active: MemberSet,
}

impl<'a> View<'a> {
    fn new(g: &'a GlobalState) -> Self {
        View {
            g,
            servers: g.servers().collect(),
            active: active_config_set(g),
        }
    }

    fn pairs(
        &self,
    ) -> impl Iterator<Item = (ServerId, &'a ServerState, ServerId, &'a ServerState)> + '_ {
        self.servers
            .iter()
            .flat_map(move |&(i, si)| self.servers.iter().map(move |&(j, sj)| (i, si, j, sj)))
    }

    fn primaries(&self) -> impl Iterator<Item = (ServerId, &'a ServerState)> + '_ {
        self.servers.iter().copied().filter(|(_, s)| s.is_primary())
    }

    fn active(&self) -> impl Iterator<Item = (ServerId, &'a ServerState)> + '_ {
        self.servers
            .iter()
            .copied()
            .filter(|(id, _)| self.active.contains(*id))
    }

    fn check(&self, id: InvariantId) -> Option<Witness> {
        match id {
            InvariantId::ElectionSafety => self.election_safety(),
            InvariantId::LeaderCompleteness => self.leader_completeness(),
            InvariantId::LogMatching => self.log_matching(),
            InvariantId::PrimaryTermEqualsConfigTerm => self.primary_term_equals_config_term(),
            InvariantId::ConfigVersionAndTermUnique => self.config_version_and_term_unique(),
            InvariantId::PrimaryContainsNewestConfigOfTerm => self.primary_contains_newest_config(),
            InvariantId::ActiveConfigsOverlap => self.active_configs_overlap(),
            InvariantId::ActiveConfigsSafeFromPastTerms => {
                self.active_configs_safe_from_past_terms()
            }
            InvariantId::PrimaryTermAtLeastLogTerm => self.primary_term_at_least_log_term(),
            InvariantId::LogEntryTermsMonotonic => self.log_entry_terms_monotonic(),
            InvariantId::UniformLogEntriesInTerm => self.uniform_log_entries_in_term(),
            InvariantId::LogEntryInTermImpliesConfigInTerm => self.log_entry_implies_config(),
            InvariantId::PrimaryHasEntriesItCreated => self.primary_has_entries_it_created(),
            InvariantId::LogsLaterThanCommittedContainCommitted => {
                self.later_logs_contain_committed()
            }
            InvariantId::ActiveConfigsOverlapWithCommitted => self.active_configs_meet_committed(),
            InvariantId::NewerConfigsDisableCommits => self.newer_configs_disable_commits(),
            InvariantId::ConfigsIncreaseMonotonically
            | InvariantId::ConfigDeactivationStability => None,
        }
    }

    fn election_safety(&self) -> Option<Witness> {
        self.pairs()
            .find(|&(s, ss, t, st)| {
                s != t && ss.is_primary() && st.is_primary() && ss.term == st.term
            })
            .map(|(s, _, t, _)| Witness::servers(&[s, t]))
    }

    fn leader_completeness(&self) -> Option<Witness> {
        for (s, ss) in self.primaries() {
            for c in &self.g.committed {
                if c.term < ss.term && !in_log(ss, c.index, c.term) {
                    return Some(Witness::servers(&[s]).entry(c.index as usize, c.term));
                }
            }
        }
        None
    }

    fn log_matching(&self) -> Option<Witness> {
        for (s, ss, t, st) in self.pairs() {
            let (ls, lt) = (ss.log.entries(), st.log.entries());
            for ind in 1..=ls.len().min(lt.len()) {
                if ls[ind - 1] == lt[ind - 1] && ls[..ind] != lt[..ind] {
                    return Some(Witness::servers(&[s, t]).indices(&[ind]));
                }
            }
        }
        None
    }

    fn primary_term_equals_config_term(&self) -> Option<Witness> {
        self.primaries()
            .find(|(_, s)| s.config.term != s.term)
            .map(|(i, _)| Witness::servers(&[i]))
    }

    fn config_version_and_term_unique(&self) -> Option<Witness> {
        self.pairs()
            .find(|(_, si, _, sj)| {
                same_version_term(&si.config, &sj.config) && si.config.members != sj.config.members
            })
            .map(|(i, _, j, _)| Witness::servers(&[i, j]))
    }

    fn primary_contains_newest_config(&self) -> Option<Witness> {
        self.pairs()
            .find(|(_, si, _, sj)| {
                si.is_primary()
                    && sj.config.term == si.term
                    && sj.config.version > si.config.version
            })
            .map(|(i, _, j, _)| Witness::servers(&[i, j]))
    }

    fn active_configs_overlap(&self) -> Option<Witness> {
        for (s, ss) in self.active() {
            for (t, st) in self.active() {
                if !overlap(ss.config.members, st.config.members) {
                    return Some(Witness::servers(&[s, t]));
                }
            }
        }
        None
    }

    fn active_configs_safe_from_past_terms(&self) -> Option<Witness> {
        for &(s, ss) in &self.servers {
            let high = servers_where(self.g, |n| n.term >= ss.config.term);
            for (t, st) in self.active() {
                if let Some(q) = quorum_missing(st.config.members, high) {
                    return Some(Witness::servers(&[s, t]).quorum(q));
                }
            }
        }
        None
    }

    fn primary_term_at_least_log_term(&self) -> Option<Witness> {
        for (s, ss) in self.primaries() {
            for (k, &t) in ss.log.entries().iter().enumerate() {
                if ss.term < t {
                    return Some(Witness::servers(&[s]).indices(&[k + 1]));
                }
            }
        }
        None
    }

    fn log_entry_terms_monotonic(&self) -> Option<Witness> {
        for &(s, ss) in &self.servers {
            let log = ss.log.entries();
            for i in 0..log.len() {
                for j in i + 1..log.len() {
                    if log[i] > log[j] {
                        return Some(Witness::servers(&[s]).indices(&[i + 1, j + 1]));
                    }
                }
            }
        }
        None
    }

    fn uniform_log_entries_in_term(&self) -> Option<Witness> {
        for (i, si, j, sj) in self.pairs() {
            let (li, lj) = (si.log.entries(), sj.log.entries());
            for ind_i in 1..=li.len() {
                for ind_j in 1..=lj.len() {
                    if ind_j < ind_i
                        && li[ind_i - 1] == lj[ind_j - 1]
                        && li[ind_j - 1] != li[ind_i - 1]
                    {
                        return Some(Witness::servers(&[i, j]).indices(&[ind_i, ind_j]));
                    }
                }
            }
        }
        None
    }

    fn log_entry_implies_config(&self) -> Option<Witness> {
        let max_config_term = self.servers.iter().map(|(_, s)| s.config.term).max()?;
        for &(s, ss) in &self.servers {
            for (k, &t) in ss.log.entries().iter().enumerate() {
                if max_config_term < t {
                    return Some(Witness::servers(&[s]).entry(k + 1, t));
                }
            }
        }
        None
    }

    fn primary_has_entries_it_created(&self) -> Option<Witness> {
        for &(j, sj) in &self.servers {
            for (k, &t) in sj.log.entries().iter().enumerate() {
                for (s, ss) in self.primaries() {
                    if ss.term == t && !ss.log.contains(k + 1, t) {
                        return Some(Witness::servers(&[s, j]).entry(k + 1, t));
                    }
                }
            }
        }
        None
    }

    fn later_logs_contain_committed(&self) -> Option<Witness> {
        for &(s, ss) in &self.servers {
            for c in &self.g.committed {
                for (k, &t) in ss.log.entries().iter().enumerate() {
                    if c.term < t && !in_log(ss, c.index, c.term) {
                        return Some(
                            Witness::servers(&[s])
                                .entry(c.index as usize, c.term)
                                .indices(&[k + 1]),
                        );
                    }
                }
            }
        }
        None
    }

    fn active_configs_meet_committed(&self) -> Option<Witness> {
        for (s, ss) in self.active() {
            for c in &self.g.committed {
                let holders = servers_where(self.g, |n| in_log(n, c.index, c.term));
                if let Some(q) = quorum_missing(ss.config.members, holders) {
                    return Some(
                        Witness::servers(&[s])
                            .entry(c.index as usize, c.term)
                            .quorum(q),
                    );
                }
            }
        }
        None
    }

    fn newer_configs_disable_commits(&self) -> Option<Witness> {
        for &(s, ss) in &self.servers {
            for (t, st) in self.primaries() {
                if st.term < ss.config.term {
                    let higher = servers_where(self.g, |n| n.term > st.term);
                    if let Some(q) = quorum_missing(st.config.members, higher) {
                        return Some(Witness::servers(&[s, t]).quorum(q));
                    }
                }
            }
        }
        None
    }
}

pub fn election_safety(g: &GlobalState) -> InvariantReport {
    check_state(g, InvariantId::ElectionSafety)
}

pub fn leader_completeness(g: &GlobalState) -> InvariantReport {
    check_state(g, InvariantId::LeaderCompleteness)
}

pub fn log_matching(g: &GlobalState) -> InvariantReport {
    check_state(g, InvariantId::LogMatching)
}

/// One report per auxiliary state lemma.
pub fn state_lemma_suite(g: &GlobalState) -> Vec<InvariantReport> {
    let view = View::new(g);
    InvariantId::STATE_LEMMAS
        .into_iter()
        .map(|id| InvariantReport::from_check(id, view.check(id)))
        .collect()
}

/// Config monotonicity and deactivation stability across one step.
pub fn transition_lemma_suite(pre: &GlobalState, post: &GlobalState) -> Vec<InvariantReport> {
    InvariantId::TRANSITION_LEMMAS
        .into_iter()
        .map(|id| InvariantReport::from_check(id, first_transition_violation(pre, post, id)))
        .collect()
}

/// Evaluates a single state property. Transition properties hold vacuously here.
pub fn check_state(g: &GlobalState, id: InvariantId) -> InvariantReport {
    InvariantReport::from_check(id, View::new(g).check(id))
}

/// The first selected state property violated by `g`, in selection order.
pub fn first_state_violation(
    g: &GlobalState,
    ids: &[InvariantId],
) -> Option<(InvariantId, Witness)> {
    let view = View::new(g);
    ids.iter()
        .filter(|id| !id.is_transition())
        .find_map(|&id| view.check(id).map(|w| (id, w)))
}

/// Checks one transition property over the step `pre -> post`.
pub fn first_transition_violation(
    pre: &GlobalState,
    post: &GlobalState,
    id: InvariantId,
) -> Option<Witness> {
    match id {
        InvariantId::ConfigsIncreaseMonotonically => pre
            .servers()
            .zip(post.servers())
            .find(|((_, a), (_, b))| compare_configs(&b.config, &a.config) == ConfigOrdering::Older)
            .map(|((s, _), _)| Witness::servers(&[s])),
        InvariantId::ConfigDeactivationStability => pre
            .servers()
            .find(|(_, s)| is_deactivated(pre, &s.config) && !is_deactivated(post, &s.config))
            .map(|(s, _)| Witness::servers(&[s])),
        _ => None,
    }
}

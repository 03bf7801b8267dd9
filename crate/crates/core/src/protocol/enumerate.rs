//! Successor generation under state bounds.

use serde::{Deserialize, Serialize};

use super::quorum::is_quorum;
use super::{Action, ActionKind, GlobalState, Rules};

/// Upper limits on the unbounded state components. A successor exceeding
/// any of them is discarded, the way a model-checker state constraint would.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateBounds {
    pub max_term: u32,
    pub max_log_len: u32,
    pub max_config_version: u32,
}

impl StateBounds {
    pub fn admits(&self, g: &GlobalState) -> bool {
        g.servers().all(|(_, s)| {
            s.term <= self.max_term
                && s.log.len() <= self.max_log_len as usize
                && s.config.version <= self.max_config_version
        })
    }
}

/// Every action, in descriptor order, whose kind passes `kinds`.
///
/// Reconfig ranges over all non-empty subsets of the universe; BecomeLeader
/// and CommitEntry range over the quorums of the actor's config.
pub(crate) fn candidate_actions(
    g: &GlobalState,
    kinds: impl Fn(ActionKind) -> bool,
) -> Vec<Action> {
    let ids: Vec<_> = g.server_ids().collect();
    let universe = g.universe();
    let mut out = Vec::new();
    if kinds(ActionKind::Reconfig) {
        for (i, s) in g.servers() {
            if !s.is_primary() {
                continue;
            }
            for m in universe.subsets().filter(|m| !m.is_empty()) {
                out.push(Action::Reconfig {
                    actor: i,
                    members: m,
                });
            }
        }
    }
    let pairs = |out: &mut Vec<Action>, make: fn(_, _) -> Action| {
        for &i in &ids {
            for &j in &ids {
                if i != j {
                    out.push(make(i, j));
                }
            }
        }
    };
    if kinds(ActionKind::SendConfig) {
        pairs(&mut out, |sender, receiver| Action::SendConfig {
            sender,
            receiver,
        });
    }
    if kinds(ActionKind::BecomeLeader) {
        for (i, s) in g.servers() {
            let m = s.config.members;
            for q in m.subsets().filter(|&q| q.contains(i) && is_quorum(q, m)) {
                out.push(Action::BecomeLeader {
                    actor: i,
                    quorum: q,
                });
            }
        }
    }
    if kinds(ActionKind::UpdateTerms) {
        pairs(&mut out, |sender, receiver| Action::UpdateTerms {
            sender,
            receiver,
        });
    }
    if kinds(ActionKind::ClientRequest) {
        for &i in &ids {
            out.push(Action::ClientRequest { actor: i });
        }
    }
    if kinds(ActionKind::GetEntries) {
        pairs(&mut out, |sender, receiver| Action::GetEntries {
            sender,
            receiver,
        });
    }
    if kinds(ActionKind::RollbackEntries) {
        pairs(&mut out, |sender, receiver| Action::RollbackEntries {
            sender,
            receiver,
        });
    }
    if kinds(ActionKind::CommitEntry) {
        for (i, s) in g.servers() {
            let m = s.config.members;
            for q in m.subsets().filter(|&q| is_quorum(q, m)) {
                out.push(Action::CommitEntry {
                    actor: i,
                    quorum: q,
                });
            }
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0] < w[1]));
    out
}

/// Enabled actions together with the states they lead to.
pub fn successors(
    g: &GlobalState,
    bounds: &StateBounds,
    rules: &Rules,
    logless_only: bool,
) -> Vec<(Action, GlobalState)> {
    candidate_actions(g, |k| !logless_only || k.is_logless())
        .into_iter()
        .filter_map(|a| {
            let next = a.apply_with(g, rules).ok()?;
            bounds.admits(&next).then_some((a, next))
        })
        .collect()
}

/// Every action enabled in `g` whose successor stays within `bounds`,
/// sorted by kind and then by arguments.
pub fn enabled_transitions(g: &GlobalState, bounds: &StateBounds) -> Vec<Action> {
    successors(g, bounds, &Rules::FULL, false)
        .into_iter()
        .map(|(a, _)| a)
        .collect()
}

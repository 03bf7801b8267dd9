//! Online safety checks over the true global state.

use std::collections::BTreeSet;

use crate::invariants::{first_state_violation, InvariantId, Witness};
use crate::protocol::{Action, GlobalState, ServerId, Term};

const CHECKED: [InvariantId; 2] = [InvariantId::ElectionSafety, InvariantId::LeaderCompleteness];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(super) struct Observer {
    pub violation: Option<(u64, InvariantId, Witness)>,
    /// Entries of acknowledged writes, as `(index, term)`.
    acked: BTreeSet<(u32, Term)>,
    pub durability_violations: u64,
}

impl Observer {
    /// Checks the state reached by `action`. Reconfiguration, config transfer
    /// and secondary log changes leave both properties as they were.
    pub fn after(&mut self, g: &GlobalState, action: &Action) -> Option<(InvariantId, Witness)> {
        match action {
            Action::BecomeLeader { actor, .. } => {
                self.check_durable(g, *actor);
                first_state_violation(g, &CHECKED)
            }
            Action::UpdateTerms { .. } | Action::CommitEntry { .. } => {
                first_state_violation(g, &CHECKED)
            }
            _ => None,
        }
    }

    /// Records an acknowledged write and checks it against every later primary.
    pub fn acknowledge(&mut self, g: &GlobalState, index: u32, term: Term) {
        self.acked.insert((index, term));
        for (_, s) in g.servers() {
            if s.is_primary() && s.term > term && !s.log.contains(index as usize, term) {
                self.durability_violations += 1;
            }
        }
    }

    fn check_durable(&mut self, g: &GlobalState, primary: ServerId) {
        let s = g.server(primary).expect("new primary exists");
        let missing = self
            .acked
            .iter()
            .filter(|&&(index, term)| term < s.term && !s.log.contains(index as usize, term))
            .count();
        self.durability_violations += missing as u64;
    }
}

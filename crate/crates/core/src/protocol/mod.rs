//! The reconfiguration protocol as pure guarded transitions over a shared global state.
//!
//! Every action of the protocol is a value of [`Action`]; applying it either
//! yields the successor state or reports the first guard that failed. Nothing
//! here models messages: each action reads whatever server state it needs
//! atomically. The [`simnet`](crate::simnet) module refines these steps into
//! message exchanges.

mod actions;
mod enumerate;
mod quorum;
mod types;

#[cfg(feature = "mutations")]
pub use actions::Mutation;
pub use actions::{
    apply_become_leader, apply_client_request, apply_commit_entry, apply_get_entries,
    apply_reconfig, apply_rollback_entries, apply_send_config, apply_update_terms, compare_configs,
    initial_state, log_geq, reconfig_enabled, Action, ActionKind, ConfigOrdering, GuardError,
    Rules,
};
pub use enumerate::{enabled_transitions, successors, StateBounds};
pub use quorum::{is_quorum, quorums, quorums_overlap};
pub use types::{
    n, CommittedEntry, Config, GlobalState, Log, LogTerm, MemberSet, Role, ServerId, ServerState,
    Term, Version, MAX_SERVER_ID,
};

pub(crate) use actions::{newer, same_version_term};
pub(crate) use enumerate::candidate_actions;
pub(crate) use quorum::{every_quorum_meets, overlap, some_quorum_within};

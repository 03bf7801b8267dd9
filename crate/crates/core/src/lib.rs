//! Logless dynamic reconfiguration for Raft-style replica sets.
//!
//! The crate is organized bottom-up:
//!
//! - [`protocol`]: configurations, quorums, and the eight guarded protocol actions.
//! - [`invariants`]: executable safety properties over states and transitions.
//! - [`explorer`]: bounded breadth-first model checking, symmetry reduction,
//!   trace replay, and the config-only refinement check.
//! - [`simnet`]: a deterministic discrete-event simulation of the protocol over
//!   a message-passing network with fault injection.
//! - [`experiment`]: the degraded-replication availability experiment, comparing
//!   logless reconfiguration against oplog-based reconfiguration.
//!
//! The guide in `book/` walks through each layer with runnable examples.

pub mod experiment;
pub mod explorer;
pub mod invariants;
pub mod protocol;
pub mod simnet;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configurations.md")]
    mod configurations {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/invariants.md")]
    mod invariants {}
    #[doc = include_str!("../../../book/src/model-checking.md")]
    mod model_checking {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/experiment.md")]
    mod experiment {}
}

//! Fault schedules: timed pauses of replication or of whole nodes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::MemberSet;

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// Log pulls and pushes stall; heartbeats, votes and config traffic continue.
    PauseReplication,
    /// The node drops every incoming message and its timers wait out the pause.
    PauseNode,
}

/// Which servers a fault hits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultTarget {
    Servers(MemberSet),
    /// The lowest-id members of the current primary's config other than the
    /// primary itself, chosen when the fault begins.
    VotingSecondaries(usize),
    /// Whichever server is primary with the highest term when the fault begins.
    Primary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub start_ms: u64,
    pub end_ms: u64,
    pub target: FaultTarget,
    pub kind: FaultKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSchedule {
    pub faults: Vec<Fault>,
}

impl FaultSchedule {
    pub fn none() -> Self {
        FaultSchedule::default()
    }

    pub fn validate(&self, universe: MemberSet) -> Result<(), SimError> {
        for (k, f) in self.faults.iter().enumerate() {
            if f.start_ms > f.end_ms {
                return Err(SimError::BadSchedule(format!(
                    "fault {k} ends at {} before it starts at {}",
                    f.end_ms, f.start_ms
                )));
            }
            if let FaultTarget::Servers(s) = f.target {
                if !s.is_subset(universe) {
                    return Err(SimError::BadSchedule(format!(
                        "fault {k} targets {s}, outside {universe}"
                    )));
                }
            }
        }
        if self
            .faults
            .windows(2)
            .any(|w| w[0].start_ms > w[1].start_ms)
        {
            return Err(SimError::BadSchedule(
                "faults must be ordered by start time".into(),
            ));
        }
        Ok(())
    }

    /// Up to three faults of random kind, target and length within `duration_ms`.
    pub fn random(rng: &mut ChaCha8Rng, universe: MemberSet, duration_ms: u64) -> Self {
        let ids: Vec<_> = universe.iter().collect();
        let count = rng.gen_range(0..=3);
        let mut faults: Vec<Fault> = (0..count)
            .map(|_| {
                let start_ms = rng.gen_range(duration_ms / 10..duration_ms * 7 / 10);
                let end_ms = (start_ms + rng.gen_range(100..=duration_ms / 4)).min(duration_ms);
                let kind = if rng.gen_bool(0.5) {
                    FaultKind::PauseReplication
                } else {
                    FaultKind::PauseNode
                };
                let target = if rng.gen_bool(0.3) {
                    FaultTarget::VotingSecondaries(rng.gen_range(1..=2))
                } else if rng.gen_bool(0.4) {
                    FaultTarget::Primary
                } else {
                    let size = rng.gen_range(1..ids.len().max(2));
                    let mut chosen = MemberSet::EMPTY;
                    while chosen.len() < size {
                        chosen.insert(ids[rng.gen_range(0..ids.len())]);
                    }
                    FaultTarget::Servers(chosen)
                };
                Fault {
                    start_ms,
                    end_ms,
                    target,
                    kind,
                }
            })
            .collect();
        faults.sort_by_key(|f| f.start_ms);
        FaultSchedule { faults }
    }
}

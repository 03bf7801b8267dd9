//! Bounded breadth-first reachability over the protocol's transitions.
//!
//! States are packed into 128-bit keys (see [`Bounds`] for the limits), so
//! the visited set is exact rather than fingerprinted. With symmetry on, the
//! key is the least packing over all server relabelings that map the initial
//! member set onto itself; only one concrete representative of each class is
//! expanded, and the parent links recorded for it replay to exactly that
//! representative.

mod codec;
mod refinement;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::invariants::{first_state_violation, first_transition_violation, InvariantId, Witness};
use crate::protocol::{
    candidate_actions, initial_state, successors, Action, GlobalState, GuardError, MemberSet,
    Rules, ServerId, StateBounds, MAX_SERVER_ID,
};

use codec::Codec;
pub use refinement::{project, project_and_check_refinement, RefinementOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolMode {
    /// All eight actions with every guard.
    #[serde(rename = "full")]
    Full,
    /// Config actions only, without the log-dependent guards.
    #[serde(rename = "logless")]
    LoglessOnly,
}

impl ProtocolMode {
    pub fn rules(self) -> Rules {
        match self {
            ProtocolMode::Full => Rules::FULL,
            ProtocolMode::LoglessOnly => Rules::LOGLESS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolMode::Full => "full",
            ProtocolMode::LoglessOnly => "logless",
        }
    }
}

impl std::str::FromStr for ProtocolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ProtocolMode::Full),
            "logless" => Ok(ProtocolMode::LoglessOnly),
            other => Err(format!("unknown mode `{other}` (expected full or logless)")),
        }
    }
}

/// Size of the model: servers `n1..nN` and caps on terms, log length and config versions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub server_count: u8,
    pub max_term: u32,
    pub max_log_len: u32,
    pub max_config_version: u32,
    pub m_init: MemberSet,
}

impl Bounds {
    /// Bounds whose initial member set is the whole universe.
    pub fn new(server_count: u8, max_term: u32, max_log_len: u32, max_config_version: u32) -> Self {
        let mut b = Bounds {
            server_count,
            max_term,
            max_log_len,
            max_config_version,
            m_init: MemberSet::EMPTY,
        };
        b.m_init = b.universe();
        b
    }

    pub fn with_m_init(self, m_init: MemberSet) -> Self {
        Bounds { m_init, ..self }
    }

    pub fn universe(&self) -> MemberSet {
        let n = u32::from(self.server_count.min(MAX_SERVER_ID));
        MemberSet::from_bits(((1u64 << (n + 1)) - 2) as u32)
    }

    pub fn state_bounds(&self) -> StateBounds {
        StateBounds {
            max_term: self.max_term,
            max_log_len: self.max_log_len,
            max_config_version: self.max_config_version,
        }
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        if self.server_count == 0 || self.server_count > MAX_SERVER_ID {
            return Err(ExploreError::InvalidBounds(format!(
                "server count must be between 1 and {MAX_SERVER_ID}"
            )));
        }
        if self.max_config_version == 0 {
            return Err(ExploreError::InvalidBounds(
                "max config version must be at least 1".into(),
            ));
        }
        if self.m_init.is_empty() || !self.m_init.is_subset(self.universe()) {
            return Err(ExploreError::InvalidBounds(format!(
                "initial member set {} must be a non-empty subset of {}",
                self.m_init,
                self.universe()
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<GlobalState, ExploreError> {
        self.validate()?;
        Ok(initial_state(self.universe(), self.m_init)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error(transparent)]
    UnknownInvariant(#[from] crate::invariants::UnknownInvariant),
    #[error("bounds need {0} bits per packed state; at most 128 are supported")]
    TooLarge(u32),
    #[error(transparent)]
    Guard(#[from] GuardError),
}

/// A behavior: an initial state and the actions taken from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub init: GlobalState,
    pub steps: Vec<Action>,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Every state along the trace, starting with `init`, up to the first failing step.
    pub fn states(&self, rules: &Rules) -> Result<Vec<GlobalState>, (usize, GuardError)> {
        let mut out = vec![self.init.clone()];
        for (k, a) in self.steps.iter().enumerate() {
            let next = a
                .apply_with(out.last().unwrap(), rules)
                .map_err(|e| (k + 1, e))?;
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ReplayOutcome {
    Valid { final_state: GlobalState },
    InvalidAtStep { step: usize, reason: GuardError },
}

/// Applies the trace's steps in order under the standard rules.
pub fn replay(trace: &Trace) -> ReplayOutcome {
    replay_with(trace, &Rules::FULL)
}

pub fn replay_with(trace: &Trace, rules: &Rules) -> ReplayOutcome {
    match trace.states(rules) {
        Ok(mut states) => ReplayOutcome::Valid {
            final_state: states.pop().unwrap(),
        },
        Err((step, reason)) => ReplayOutcome::InvalidAtStep { step, reason },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    AllHold,
    Violation,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::AllHold => "all-hold",
            Verdict::Violation => "violation",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCount {
    pub name: InvariantId,
    /// States for state properties, edges for transition properties.
    pub checked: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub distinct_states: u64,
    pub transitions: u64,
    /// Largest number of steps from the initial state to any explored state.
    pub max_depth: u32,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated: Option<InvariantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Trace>,
    pub per_invariant: Vec<InvariantCount>,
}

/// Everything that determines an exploration run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreParams {
    pub mode: ProtocolMode,
    pub bounds: Bounds,
    pub invariants: Vec<InvariantId>,
    pub symmetry: bool,
    pub rules: Rules,
}

impl ExploreParams {
    /// All invariants, no symmetry, the mode's standard rules.
    pub fn new(mode: ProtocolMode, bounds: Bounds) -> Self {
        ExploreParams {
            mode,
            bounds,
            invariants: InvariantId::ALL.to_vec(),
            symmetry: false,
            rules: mode.rules(),
        }
    }

    pub fn invariants(mut self, ids: &[InvariantId]) -> Self {
        let mut ids = ids.to_vec();
        ids.sort();
        ids.dedup();
        self.invariants = ids;
        self
    }

    pub fn symmetry(mut self, on: bool) -> Self {
        self.symmetry = on;
        self
    }

    /// Switches off one guard, for checking that the search catches the result.
    #[cfg(feature = "mutations")]
    pub fn mutate(mut self, mutation: crate::protocol::Mutation) -> Self {
        self.rules = self.rules.mutated(mutation);
        self
    }
}

/// Runs the search with invariants selected by name.
pub fn explore(
    mode: ProtocolMode,
    bounds: &Bounds,
    invariants: &[&str],
    symmetry: bool,
) -> Result<ExplorationReport, ExploreError> {
    let ids = InvariantId::parse_list(&invariants.join(","))?;
    explore_with(
        &ExploreParams::new(mode, *bounds)
            .invariants(&ids)
            .symmetry(symmetry),
    )
}

pub fn explore_with(params: &ExploreParams) -> Result<ExplorationReport, ExploreError> {
    Search::new(params)?.run(None)
}

/// Every reachable state, with no symmetry reduction and no invariant checks.
pub fn reachable_states(
    mode: ProtocolMode,
    bounds: &Bounds,
) -> Result<BTreeSet<GlobalState>, ExploreError> {
    let params = ExploreParams::new(mode, *bounds).invariants(&[]);
    let mut states = BTreeSet::new();
    Search::new(&params)?.run(Some(&mut states))?;
    Ok(states)
}

struct Search<'p> {
    params: &'p ExploreParams,
    codec: Codec,
    state_ids: Vec<InvariantId>,
    transition_ids: Vec<InvariantId>,
}

const ROOT: u32 = u32::MAX;

impl<'p> Search<'p> {
    fn new(params: &'p ExploreParams) -> Result<Self, ExploreError> {
        params.bounds.validate()?;
        let codec = Codec::new(&params.bounds, params.symmetry)?;
        let (transition_ids, state_ids) =
            params.invariants.iter().partition(|id| id.is_transition());
        Ok(Search {
            params,
            codec,
            state_ids,
            transition_ids,
        })
    }

    fn run(
        &self,
        mut collect: Option<&mut BTreeSet<GlobalState>>,
    ) -> Result<ExplorationReport, ExploreError> {
        let init = self.params.bounds.initial_state()?;
        let bounds = self.params.bounds.state_bounds();
        let logless = self.params.mode == ProtocolMode::LoglessOnly;

        let mut index: FxHashMap<u128, u32> = FxHashMap::default();
        let mut parents: Vec<(u32, Option<Action>)> = vec![(ROOT, None)];
        index.insert(self.codec.canonical_key(&init), 0);
        let mut edges = 0u64;
        let mut depth = 0u32;

        let report = |verdict,
                      violation: Option<(InvariantId, Witness, Trace)>,
                      states: usize,
                      edges: u64,
                      depth: u32| {
            let (violated, witness, counterexample) = match violation {
                Some((id, w, t)) => (Some(id), Some(w), Some(t)),
                None => (None, None, None),
            };
            ExplorationReport {
                distinct_states: states as u64,
                transitions: edges,
                max_depth: depth,
                verdict,
                violated,
                witness,
                counterexample,
                per_invariant: self
                    .params
                    .invariants
                    .iter()
                    .map(|&name| InvariantCount {
                        name,
                        checked: if name.is_transition() {
                            edges
                        } else {
                            states as u64
                        },
                    })
                    .collect(),
            }
        };
        let trace_to = |parents: &[(u32, Option<Action>)], mut id: u32, last: Option<Action>| {
            let mut steps: Vec<Action> = last.into_iter().collect();
            while let (p, Some(a)) = &parents[id as usize] {
                steps.push(a.clone());
                id = *p;
            }
            steps.reverse();
            Trace {
                init: init.clone(),
                steps,
            }
        };

        if let Some((id, w)) = first_state_violation(&init, &self.state_ids) {
            let t = trace_to(&parents, 0, None);
            return Ok(report(Verdict::Violation, Some((id, w, t)), 1, 0, 0));
        }
        if let Some(states) = collect.as_deref_mut() {
            states.insert(init.clone());
        }

        let mut frontier: Vec<(u32, u128)> = vec![(0, self.codec.encode(&init))];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &(id, raw) in &frontier {
                let g = self.codec.decode(raw);
                for (a, h) in successors(&g, &bounds, &self.params.rules, logless) {
                    edges += 1;
                    for &tid in &self.transition_ids {
                        if let Some(w) = first_transition_violation(&g, &h, tid) {
                            let t = trace_to(&parents, id, Some(a));
                            return Ok(report(
                                Verdict::Violation,
                                Some((tid, w, t)),
                                index.len(),
                                edges,
                                depth + 1,
                            ));
                        }
                    }
                    let key = self.codec.canonical_key(&h);
                    if index.contains_key(&key) {
                        continue;
                    }
                    let new_id = parents.len() as u32;
                    index.insert(key, new_id);
                    parents.push((id, Some(a)));
                    if let Some((sid, w)) = first_state_violation(&h, &self.state_ids) {
                        let t = trace_to(&parents, new_id, None);
                        return Ok(report(
                            Verdict::Violation,
                            Some((sid, w, t)),
                            index.len(),
                            edges,
                            depth + 1,
                        ));
                    }
                    if let Some(states) = collect.as_deref_mut() {
                        states.insert(h.clone());
                    }
                    next.push((new_id, self.codec.encode(&h)));
                }
            }
            if !next.is_empty() {
                depth += 1;
            }
            frontier = next;
        }
        Ok(report(Verdict::AllHold, None, index.len(), edges, depth))
    }
}

fn relabel(g: &GlobalState, map: &BTreeMap<ServerId, ServerId>) -> GlobalState {
    let image = |m: MemberSet| m.iter().map(|id| map[&id]).collect::<MemberSet>();
    let servers = g
        .servers()
        .map(|(id, s)| {
            let mut s = s.clone();
            s.config.members = image(s.config.members);
            (map[&id], s)
        })
        .collect();
    GlobalState::from_servers(servers, g.committed.clone()).expect("relabeling preserves validity")
}

/// The least state, in `GlobalState`'s order, among all relabelings of `g`'s servers.
pub fn canonicalize(g: &GlobalState) -> GlobalState {
    canonicalize_fixing(g, MemberSet::EMPTY)
}

/// Like [`canonicalize`], restricted to relabelings that map `fixed` onto itself.
pub fn canonicalize_fixing(g: &GlobalState, fixed: MemberSet) -> GlobalState {
    let ids: Vec<ServerId> = g.server_ids().collect();
    let mut images = ids.clone();
    let mut best: Option<GlobalState> = None;
    each_permutation(&mut images, 0, &mut |images| {
        let map: BTreeMap<_, _> = ids.iter().copied().zip(images.iter().copied()).collect();
        if ids
            .iter()
            .any(|&id| fixed.contains(id) != fixed.contains(map[&id]))
        {
            return;
        }
        let h = relabel(g, &map);
        if best.as_ref().is_none_or(|b| h < *b) {
            best = Some(h);
        }
    });
    best.expect("identity is always admissible")
}

fn each_permutation<T: Copy>(v: &mut Vec<T>, k: usize, visit: &mut impl FnMut(&[T])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        each_permutation(v, k + 1, visit);
        v.swap(k, i);
    }
}

/// A random behavior of up to `max_steps` steps, choosing uniformly among enabled actions.
pub fn random_walk(init: &GlobalState, max_steps: usize, rules: &Rules, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = init.clone();
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let enabled: Vec<Action> = candidate_actions(&g, |_| true)
            .into_iter()
            .filter(|a| a.check(&g, rules).is_ok())
            .collect();
        let Some(a) = enabled.choose(&mut rng) else {
            break;
        };
        g = a.apply_with(&g, rules).expect("chosen action is enabled");
        steps.push(a.clone());
    }
    Trace {
        init: init.clone(),
        steps,
    }
}

#[cfg(test)]
mod tests;

use proptest::prelude::*;

use super::*;
use crate::invariants::InvariantId;
use crate::members;
use crate::protocol::{apply_become_leader, n, ActionKind};

fn init3() -> GlobalState {
    Bounds::new(3, 2, 1, 2).initial_state().unwrap()
}

#[test]
fn replay_examples() {
    let trace = Trace {
        init: init3(),
        steps: vec![Action::BecomeLeader {
            actor: n(1),
            quorum: members![1, 2],
        }],
    };
    let expected = apply_become_leader(&init3(), n(1), members![1, 2]).unwrap();
    assert_eq!(
        replay(&trace),
        ReplayOutcome::Valid {
            final_state: expected
        }
    );

    let bad = Trace {
        init: init3(),
        steps: vec![Action::Reconfig {
            actor: n(1),
            members: members![1, 2, 3],
        }],
    };
    assert_eq!(
        replay(&bad),
        ReplayOutcome::InvalidAtStep {
            step: 1,
            reason: GuardError::NotPrimary
        }
    );
}

#[test]
fn trace_json_round_trip_keeps_field_order() {
    let trace = Trace {
        init: init3(),
        steps: vec![
            Action::BecomeLeader {
                actor: n(1),
                quorum: members![1, 2],
            },
            Action::SendConfig {
                sender: n(1),
                receiver: n(3),
            },
        ],
    };
    let json = trace.to_json();
    assert!(json.find("\"init\"").unwrap() < json.find("\"steps\"").unwrap());
    assert!(json.contains("\"kind\": \"BecomeLeader\""));
    assert_eq!(Trace::from_json(&json).unwrap(), trace);
}

#[test]
fn tiny_full_instance_holds() {
    let report = explore(
        ProtocolMode::Full,
        &Bounds::new(2, 1, 0, 1),
        &["all"],
        false,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::AllHold);
    assert!(report.counterexample.is_none());
    assert!(report.distinct_states > 1);
}

#[test]
fn unknown_invariant_is_an_error() {
    let err = explore(
        ProtocolMode::Full,
        &Bounds::new(2, 1, 0, 1),
        &["bogus"],
        false,
    )
    .unwrap_err();
    assert!(matches!(err, ExploreError::UnknownInvariant(_)));
}

#[test]
fn invalid_bounds_are_rejected() {
    for b in [
        Bounds::new(0, 1, 0, 1),
        Bounds::new(2, 1, 0, 0),
        Bounds::new(2, 1, 0, 1).with_m_init(members![3]),
    ] {
        assert!(matches!(
            explore_with(&ExploreParams::new(ProtocolMode::Full, b)),
            Err(ExploreError::InvalidBounds(_))
        ));
    }
}

#[test]
fn symmetry_agrees_with_plain_search() {
    for (mode, b) in [
        (ProtocolMode::Full, Bounds::new(3, 1, 1, 2)),
        (ProtocolMode::LoglessOnly, Bounds::new(3, 2, 0, 2)),
        (
            ProtocolMode::Full,
            Bounds::new(3, 2, 1, 1).with_m_init(members![1, 2]),
        ),
    ] {
        let plain = explore_with(&ExploreParams::new(mode, b)).unwrap();
        let sym = explore_with(&ExploreParams::new(mode, b).symmetry(true)).unwrap();
        assert_eq!(plain.verdict, sym.verdict);
        assert!(sym.distinct_states <= plain.distinct_states);
        assert!(sym.distinct_states < plain.distinct_states || b.server_count == 1);
        assert_eq!(plain.max_depth, sym.max_depth);
    }
}

#[test]
fn symmetric_classes_cover_every_plain_state() {
    let b = Bounds::new(3, 1, 1, 2);
    let plain = reachable_states(ProtocolMode::Full, &b).unwrap();
    let classes: BTreeSet<_> = plain.iter().map(canonicalize).collect();
    let sym = explore_with(&ExploreParams::new(ProtocolMode::Full, b).symmetry(true)).unwrap();
    assert_eq!(classes.len() as u64, sym.distinct_states);
}

#[test]
fn runs_are_deterministic() {
    let params = ExploreParams::new(ProtocolMode::Full, Bounds::new(3, 1, 1, 2)).symmetry(true);
    assert_eq!(
        explore_with(&params).unwrap(),
        explore_with(&params).unwrap()
    );
}

#[test]
fn logless_mode_only_takes_config_actions() {
    let states = reachable_states(ProtocolMode::LoglessOnly, &Bounds::new(3, 2, 2, 2)).unwrap();
    assert!(states
        .iter()
        .all(|g| g.committed.is_empty() && g.servers().all(|(_, s)| s.log.is_empty())));
}

#[test]
fn canonicalize_examples() {
    let g = init3();
    assert_eq!(canonicalize(&g), g);

    let a = apply_become_leader(&g, n(1), members![1, 2]).unwrap();
    let b = apply_become_leader(&g, n(2), members![1, 2]).unwrap();
    assert_ne!(a, b);
    assert_eq!(canonicalize(&a), canonicalize(&b));

    let c = apply_become_leader(&g, n(1), members![1, 3]).unwrap();
    assert_eq!(canonicalize(&a), canonicalize(&c));
}

#[test]
fn canonicalize_fixing_respects_the_fixed_set() {
    let g = Bounds::new(3, 1, 0, 1)
        .with_m_init(members![1, 2])
        .initial_state()
        .unwrap();
    let a = apply_become_leader(&g, n(1), members![1, 2]).unwrap();
    let b = apply_become_leader(&g, n(2), members![1, 2]).unwrap();
    assert_eq!(
        canonicalize_fixing(&a, members![1, 2]),
        canonicalize_fixing(&b, members![1, 2])
    );
    let mut moved = g.clone();
    moved.server_mut(n(3)).unwrap().term = 1;
    let mut other = g.clone();
    other.server_mut(n(1)).unwrap().term = 1;
    assert_ne!(
        canonicalize_fixing(&moved, members![1, 2]),
        canonicalize_fixing(&other, members![1, 2])
    );
}

fn arb_reachable() -> impl Strategy<Value = GlobalState> {
    (any::<u64>(), 0usize..15).prop_map(|(seed, len)| {
        let t = random_walk(&init3(), len, &Rules::FULL, seed);
        replay_final(&t)
    })
}

fn replay_final(t: &Trace) -> GlobalState {
    match replay(t) {
        ReplayOutcome::Valid { final_state } => final_state,
        other => panic!("random walk produced an invalid trace: {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_is_idempotent_and_permutation_invariant(
        g in arb_reachable(),
        perm in Just(vec![1u8, 2, 3]).prop_shuffle(),
    ) {
        let c = canonicalize(&g);
        prop_assert_eq!(&canonicalize(&c), &c);
        let map = (1..=3).map(n).zip(perm.into_iter().map(n)).collect();
        prop_assert_eq!(canonicalize(&relabel(&g, &map)), c);
    }

    #[test]
    fn packed_canonical_keys_agree_with_canonicalize(a in arb_reachable(), b in arb_reachable()) {
        let within = |g: &GlobalState| g.servers().all(|(_, s)| s.term <= 3 && s.log.len() <= 2 && s.config.version <= 3);
        prop_assume!(within(&a) && within(&b));
        let codec = codec::Codec::new(&Bounds::new(3, 3, 2, 3), true).unwrap();
        prop_assert_eq!(
            codec.canonical_key(&a) == codec.canonical_key(&b),
            canonicalize(&a) == canonicalize(&b)
        );
    }

    #[test]
    fn random_walks_refine(seed in any::<u64>(), len in 0usize..20) {
        let t = random_walk(&init3(), len, &Rules::FULL, seed);
        prop_assert_eq!(project_and_check_refinement(&t), RefinementOutcome::Refines);
    }
}

#[test]
fn random_walk_is_seeded() {
    let a = random_walk(&init3(), 20, &Rules::FULL, 7);
    assert_eq!(a, random_walk(&init3(), 20, &Rules::FULL, 7));
    assert!(matches!(replay(&a), ReplayOutcome::Valid { .. }));
}

#[test]
fn log_only_steps_project_to_stutters() {
    let init = init3();
    let mut steps = vec![Action::BecomeLeader {
        actor: n(1),
        quorum: members![1, 2],
    }];
    steps.extend([
        Action::ClientRequest { actor: n(1) },
        Action::ClientRequest { actor: n(1) },
        Action::GetEntries {
            sender: n(1),
            receiver: n(2),
        },
        Action::GetEntries {
            sender: n(1),
            receiver: n(3),
        },
    ]);
    let t = Trace { init, steps };
    assert_eq!(project_and_check_refinement(&t), RefinementOutcome::Refines);
    let states = t.states(&Rules::FULL).unwrap();
    for w in states[1..].windows(2) {
        assert_eq!(project(&w[0]), project(&w[1]));
    }
}

#[test]
fn election_send_config_reconfig_trace_refines() {
    let t = Trace {
        init: init3(),
        steps: vec![
            Action::BecomeLeader {
                actor: n(1),
                quorum: members![1, 2],
            },
            Action::SendConfig {
                sender: n(1),
                receiver: n(2),
            },
            Action::Reconfig {
                actor: n(1),
                members: members![1, 2],
            },
        ],
    };
    assert!(t
        .steps
        .iter()
        .all(|a| a.kind() != ActionKind::ClientRequest));
    assert_eq!(project_and_check_refinement(&t), RefinementOutcome::Refines);
}

#[test]
fn refinement_rejects_bad_initial_states_and_invalid_steps() {
    let mut init = init3();
    init.server_mut(n(2)).unwrap().term = 1;
    let t = Trace {
        init,
        steps: vec![],
    };
    assert!(matches!(
        project_and_check_refinement(&t),
        RefinementOutcome::FailsAtStep { step: 0, .. }
    ));

    let t = Trace {
        init: init3(),
        steps: vec![Action::ClientRequest { actor: n(1) }],
    };
    assert!(matches!(
        project_and_check_refinement(&t),
        RefinementOutcome::FailsAtStep { step: 1, .. }
    ));
}

#[test]
fn state_invariants_are_checked_on_the_initial_state_only_once() {
    let report = explore_with(
        &ExploreParams::new(ProtocolMode::Full, Bounds::new(1, 1, 1, 1)).invariants(&[
            InvariantId::ElectionSafety,
            InvariantId::ConfigsIncreaseMonotonically,
        ]),
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::AllHold);
    assert_eq!(report.per_invariant[0].checked, report.distinct_states);
    assert_eq!(report.per_invariant[1].checked, report.transitions);
}

#[cfg(feature = "mutations")]
#[test]
fn mutated_search_reports_a_replayable_shortest_counterexample() {
    use crate::invariants::check_state;
    use crate::protocol::Mutation;

    let params = ExploreParams::new(ProtocolMode::Full, Bounds::new(3, 1, 0, 3))
        .symmetry(true)
        .mutate(Mutation::DropQ1);
    let report = explore_with(&params).unwrap();
    assert_eq!(report.verdict, Verdict::Violation);
    let trace = report.counterexample.unwrap();
    let id = report.violated.unwrap();
    let ReplayOutcome::Valid { final_state } = replay_with(&trace, &params.rules) else {
        panic!("counterexample does not replay");
    };
    if !id.is_transition() {
        assert!(!check_state(&final_state, id).holds);
    }
    assert!(trace.steps.len() as u32 <= report.max_depth);
}

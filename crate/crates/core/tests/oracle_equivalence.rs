//! The explorer's reachable set against the naive enumerator in `naive`.

mod naive;

use std::collections::BTreeSet;

use logless_reconfig::explorer::{reachable_states, Bounds, ProtocolMode};
use logless_reconfig::protocol::GlobalState;
use naive::{naive_reachable, to_global, Limits};

fn compare(mode: ProtocolMode, n: u8, term: u32, len: u32, version: u32) {
    let lim = Limits {
        term,
        len: len as usize,
        version,
        logless: mode == ProtocolMode::LoglessOnly,
    };
    let naive: BTreeSet<GlobalState> = naive_reachable(n as usize, &lim)
        .iter()
        .map(to_global)
        .collect();
    let bfs = reachable_states(mode, &Bounds::new(n, term, len, version)).unwrap();
    assert_eq!(
        bfs.len(),
        naive.len(),
        "{mode:?} ({n}, {term}, {len}, {version})"
    );
    assert_eq!(bfs, naive, "{mode:?} ({n}, {term}, {len}, {version})");
}

#[test]
fn two_servers_term_1_no_log_version_1() {
    compare(ProtocolMode::Full, 2, 1, 0, 1);
}

#[test]
fn larger_full_instances() {
    compare(ProtocolMode::Full, 2, 2, 2, 2);
    compare(ProtocolMode::Full, 3, 2, 1, 2);
}

#[test]
fn logless_instances() {
    compare(ProtocolMode::LoglessOnly, 2, 2, 0, 3);
    compare(ProtocolMode::LoglessOnly, 3, 2, 0, 2);
}

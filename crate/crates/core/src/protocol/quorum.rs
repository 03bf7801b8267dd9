//! Majority quorums over member sets.

use super::{GuardError, MemberSet};

/// Whether `s` is a quorum of `m`: a subset holding a strict majority.
pub fn is_quorum(s: MemberSet, m: MemberSet) -> bool {
    s.is_subset(m) && 2 * s.len() > m.len()
}

/// Every quorum of `m`, in increasing mask order.
pub fn quorums(m: MemberSet) -> Result<Vec<MemberSet>, GuardError> {
    if m.is_empty() {
        return Err(GuardError::EmptyMemberSet);
    }
    Ok(m.subsets().filter(|&s| is_quorum(s, m)).collect())
}

/// Whether every quorum of `m1` intersects every quorum of `m2`.
pub fn quorums_overlap(m1: MemberSet, m2: MemberSet) -> Result<bool, GuardError> {
    if m1.is_empty() || m2.is_empty() {
        return Err(GuardError::EmptyMemberSet);
    }
    Ok(overlap(m1, m2))
}

/// Smallest quorum size of a set with `len` members.
fn majority(len: usize) -> usize {
    len / 2 + 1
}

/// Disjoint quorums exist iff some split of the shared members gives each
/// side a majority of its own set: the first side takes all of `m1 \ m2`
/// plus `x` shared members, the second the rest.
pub(crate) fn overlap(m1: MemberSet, m2: MemberSet) -> bool {
    let only1 = m1.difference(m2).len();
    let only2 = m2.difference(m1).len();
    let shared = m1.intersection(m2).len();
    let need1 = majority(m1.len());
    let need2 = majority(m2.len());
    let lo = need1.saturating_sub(only1);
    // x <= only2 + shared - need2, which may be negative
    let hi = (only2 + shared).checked_sub(need2).map(|h| h.min(shared));
    match hi {
        Some(hi) => lo > hi,
        None => true,
    }
}

/// `∃ Q ∈ Quorums(m) : Q ⊆ s`: some quorum of `m` lies entirely inside `s`.
pub(crate) fn some_quorum_within(m: MemberSet, s: MemberSet) -> bool {
    2 * m.intersection(s).len() > m.len()
}

/// `∀ Q ∈ Quorums(m) : ∃ n ∈ Q : n ∈ s`: every quorum of `m` meets `s`.
pub(crate) fn every_quorum_meets(m: MemberSet, s: MemberSet) -> bool {
    !some_quorum_within(m, m.difference(s))
}

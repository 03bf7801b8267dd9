use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GuardError;

/// Election epoch. Also used for the terms recorded in log entries.
pub type Term = u32;

/// Configuration version counter.
pub type Version = u32;

/// Largest server id representable in a [`MemberSet`].
pub const MAX_SERVER_ID: u8 = 31;

/// Identifier of one replica set server, rendered as `n<k>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(u8);

impl ServerId {
    pub fn new(id: u8) -> Result<Self, GuardError> {
        if id > MAX_SERVER_ID {
            return Err(GuardError::ServerIdOutOfRange(id));
        }
        Ok(ServerId(id))
    }

    pub const fn raw(self) -> u8 {
        self.0
    }

    fn bit(self) -> u32 {
        1u32 << self.0
    }
}

/// Shorthand for tests and examples; panics on ids above [`MAX_SERVER_ID`].
pub fn n(id: u8) -> ServerId {
    ServerId::new(id).expect("server id out of range")
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl FromStr for ServerId {
    type Err = GuardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('n')
            .ok_or_else(|| GuardError::BadServerName(s.to_string()))?;
        let id: u8 = digits
            .parse()
            .map_err(|_| GuardError::BadServerName(s.to_string()))?;
        ServerId::new(id)
    }
}

impl Serialize for ServerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ServerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// A finite set of servers, stored as a bitmask over server ids.
///
/// Ordering is the numeric order of the mask (lowest id is the least
/// significant bit); descriptor enumeration relies on it being stable.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberSet(u32);

impl MemberSet {
    pub const EMPTY: MemberSet = MemberSet(0);

    pub const fn from_bits(bits: u32) -> Self {
        MemberSet(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, id: ServerId) -> bool {
        self.0 & id.bit() != 0
    }

    pub fn insert(&mut self, id: ServerId) {
        self.0 |= id.bit();
    }

    pub fn remove(&mut self, id: ServerId) {
        self.0 &= !id.bit();
    }

    pub fn with(mut self, id: ServerId) -> Self {
        self.insert(id);
        self
    }

    pub fn without(mut self, id: ServerId) -> Self {
        self.remove(id);
        self
    }

    pub fn union(self, other: MemberSet) -> Self {
        MemberSet(self.0 | other.0)
    }

    pub fn intersection(self, other: MemberSet) -> Self {
        MemberSet(self.0 & other.0)
    }

    pub fn difference(self, other: MemberSet) -> Self {
        MemberSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: MemberSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ServerId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let id = bits.trailing_zeros() as u8;
            bits &= bits - 1;
            Some(ServerId(id))
        })
    }

    /// Every subset of `self`, in increasing mask order, starting with the empty set.
    pub fn subsets(self) -> impl Iterator<Item = MemberSet> {
        let full = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(MemberSet(cur))
        })
    }

    /// Position of `id` among the members in increasing id order.
    pub fn rank(self, id: ServerId) -> Option<usize> {
        if !self.contains(id) {
            return None;
        }
        Some((self.0 & (id.bit() - 1)).count_ones() as usize)
    }
}

impl FromIterator<ServerId> for MemberSet {
    fn from_iter<I: IntoIterator<Item = ServerId>>(iter: I) -> Self {
        let mut set = MemberSet::EMPTY;
        for id in iter {
            set.insert(id);
        }
        set
    }
}

impl fmt::Debug for MemberSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MemberSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, id) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for MemberSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for MemberSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<ServerId>::deserialize(deserializer)?;
        Ok(ids.into_iter().collect())
    }
}

/// Builds a [`MemberSet`] from raw server ids: `members![1, 2, 3]` is `{n1,n2,n3}`.
#[macro_export]
macro_rules! members {
    ($($id:expr),* $(,)?) => {
        [$($crate::protocol::n($id)),*].into_iter().collect::<$crate::protocol::MemberSet>()
    };
}

/// A configuration `(members, version, term)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Config {
    pub members: MemberSet,
    pub version: Version,
    pub term: Term,
}

impl Config {
    pub const fn new(members: MemberSet, version: Version, term: Term) -> Self {
        Config {
            members,
            version,
            term,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Primary,
    Secondary,
}

/// Last term of a log, with `None` standing for the empty-log sentinel.
///
/// `None` orders below every real term, which is all the sentinel is used for.
pub type LogTerm = Option<Term>;

/// An oplog: the term of each entry, with the position giving its 1-based index.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Log(Vec<Term>);

impl Log {
    pub fn new() -> Self {
        Log(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last_term(&self) -> LogTerm {
        self.0.last().copied()
    }

    /// Term of the entry at 1-based `index`.
    pub fn term_at(&self, index: usize) -> Option<Term> {
        index.checked_sub(1).and_then(|k| self.0.get(k)).copied()
    }

    /// Whether the entry `(index, term)` is present.
    pub fn contains(&self, index: usize, term: Term) -> bool {
        self.term_at(index) == Some(term)
    }

    pub fn is_prefix_of(&self, other: &Log) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn entries(&self) -> &[Term] {
        &self.0
    }

    pub fn push(&mut self, term: Term) {
        self.0.push(term);
    }

    pub fn pop(&mut self) -> Option<Term> {
        self.0.pop()
    }
}

impl From<Vec<Term>> for Log {
    fn from(entries: Vec<Term>) -> Self {
        Log(entries)
    }
}

/// One server's local protocol state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServerState {
    pub term: Term,
    pub role: Role,
    pub config: Config,
    pub log: Log,
}

impl ServerState {
    pub fn is_primary(&self) -> bool {
        self.role == Role::Primary
    }
}

/// An `(index, term)` pair in the committed ghost set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommittedEntry {
    pub index: u32,
    pub term: Term,
}

impl CommittedEntry {
    pub const fn new(index: u32, term: Term) -> Self {
        CommittedEntry { index, term }
    }
}

impl Serialize for CommittedEntry {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.index, self.term).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CommittedEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (index, term) = <(u32, Term)>::deserialize(deserializer)?;
        if index == 0 || term == 0 {
            return Err(D::Error::custom(
                "committed entries have index and term >= 1",
            ));
        }
        Ok(CommittedEntry { index, term })
    }
}

/// The whole protocol state: every server of the universe plus the committed ghost set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalState {
    universe: MemberSet,
    servers: Vec<ServerState>,
    pub committed: BTreeSet<CommittedEntry>,
}

impl GlobalState {
    /// Assembles a state from explicit per-server states.
    pub fn from_servers(
        servers: BTreeMap<ServerId, ServerState>,
        committed: BTreeSet<CommittedEntry>,
    ) -> Result<Self, GuardError> {
        if servers.is_empty() {
            return Err(GuardError::EmptyMemberSet);
        }
        let universe: MemberSet = servers.keys().copied().collect();
        for s in servers.values() {
            if s.config.members.is_empty() {
                return Err(GuardError::EmptyMemberSet);
            }
            if !s.config.members.is_subset(universe) {
                return Err(GuardError::OutsideUniverse(s.config.members));
            }
        }
        Ok(GlobalState {
            universe,
            servers: servers.into_values().collect(),
            committed,
        })
    }

    pub fn universe(&self) -> MemberSet {
        self.universe
    }

    pub fn server_ids(&self) -> impl Iterator<Item = ServerId> {
        self.universe.iter()
    }

    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    pub fn server(&self, id: ServerId) -> Result<&ServerState, GuardError> {
        self.universe
            .rank(id)
            .map(|k| &self.servers[k])
            .ok_or(GuardError::UnknownServer(id))
    }

    pub fn server_mut(&mut self, id: ServerId) -> Result<&mut ServerState, GuardError> {
        match self.universe.rank(id) {
            Some(k) => Ok(&mut self.servers[k]),
            None => Err(GuardError::UnknownServer(id)),
        }
    }

    /// Servers paired with their ids, in increasing id order.
    pub fn servers(&self) -> impl Iterator<Item = (ServerId, &ServerState)> {
        self.universe.iter().zip(self.servers.iter())
    }

    pub(crate) fn servers_slice_mut(&mut self) -> &mut [ServerState] {
        &mut self.servers
    }

    pub(crate) fn from_parts(
        universe: MemberSet,
        servers: Vec<ServerState>,
        committed: BTreeSet<CommittedEntry>,
    ) -> Self {
        debug_assert_eq!(universe.len(), servers.len());
        GlobalState {
            universe,
            servers,
            committed,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GlobalStateRepr {
    servers: BTreeMap<ServerId, ServerState>,
    committed: BTreeSet<CommittedEntry>,
}

impl Serialize for GlobalState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = GlobalStateRepr {
            servers: self.servers().map(|(id, s)| (id, s.clone())).collect(),
            committed: self.committed.clone(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GlobalState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = GlobalStateRepr::deserialize(deserializer)?;
        GlobalState::from_servers(repr.servers, repr.committed).map_err(D::Error::custom)
    }
}

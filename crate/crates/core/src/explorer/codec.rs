//! Fixed-width packing of bounded states into a `u128`, with relabeling for symmetry.

use std::collections::BTreeSet;

use crate::protocol::{
    CommittedEntry, Config, GlobalState, Log, MemberSet, Role, ServerState, Term,
};

use super::{Bounds, ExploreError};

fn bits_for(max: u32) -> u32 {
    32 - max.leading_zeros()
}

/// Bit layout derived from the bounds. Servers `n1..nN` occupy consecutive
/// fields, lowest id in the lowest bits; the committed set sits above them.
///
/// Within a server field, members come first so relabeling only has to
/// rewrite the low `N` bits.
#[derive(Clone, Debug)]
pub(crate) struct Codec {
    n: usize,
    term_bits: u32,
    version_bits: u32,
    len_bits: u32,
    max_len: usize,
    max_term: u32,
    server_bits: u32,
    universe: MemberSet,
    perms: Vec<Perm>,
}

/// A relabeling of servers: position `i` moves to `target[i]`, and member
/// masks are mapped through `masks`.
#[derive(Clone, Debug)]
struct Perm {
    target: Vec<usize>,
    masks: Vec<u32>,
}

impl Codec {
    pub(crate) fn new(bounds: &Bounds, symmetry: bool) -> Result<Self, ExploreError> {
        let n = bounds.server_count as usize;
        let term_bits = bits_for(bounds.max_term);
        let version_bits = bits_for(bounds.max_config_version);
        let len_bits = bits_for(bounds.max_log_len);
        let max_len = bounds.max_log_len as usize;
        let server_bits = n as u32
            + 1
            + term_bits
            + version_bits
            + term_bits
            + len_bits
            + max_len as u32 * term_bits;
        let committed_bits = max_len as u32 * (bounds.max_term + 1);
        let total = n as u32 * server_bits + committed_bits;
        if total > 128 {
            return Err(ExploreError::TooLarge(total));
        }
        let perms = if symmetry {
            stabilizer(n, bounds.m_init)
        } else {
            vec![identity(n)]
        };
        Ok(Codec {
            n,
            term_bits,
            version_bits,
            len_bits,
            max_len,
            max_term: bounds.max_term,
            server_bits,
            universe: bounds.universe(),
            perms,
        })
    }

    fn encode_server(&self, s: &ServerState) -> u64 {
        let mut code = 0u64;
        let mut at = 0u32;
        let mut put = |v: u64, width: u32| {
            code |= v << at;
            at += width;
        };
        put(u64::from(s.config.members.bits() >> 1), self.n as u32);
        put(u64::from(s.role == Role::Primary), 1);
        put(u64::from(s.term), self.term_bits);
        put(u64::from(s.config.version), self.version_bits);
        put(u64::from(s.config.term), self.term_bits);
        put(s.log.len() as u64, self.len_bits);
        for &t in s.log.entries() {
            put(u64::from(t), self.term_bits);
        }
        code
    }

    fn decode_server(&self, code: u64) -> ServerState {
        let mut at = 0u32;
        let mut take = |width: u32| -> u32 {
            let v = (code >> at) & ((1u64 << width) - 1);
            at += width;
            v as u32
        };
        let members = MemberSet::from_bits(take(self.n as u32) << 1);
        let role = if take(1) == 1 {
            Role::Primary
        } else {
            Role::Secondary
        };
        let term = take(self.term_bits);
        let version = take(self.version_bits);
        let config_term = take(self.term_bits);
        let len = take(self.len_bits) as usize;
        let log: Vec<Term> = (0..len).map(|_| take(self.term_bits)).collect();
        ServerState {
            term,
            role,
            config: Config::new(members, version, config_term),
            log: Log::from(log),
        }
    }

    fn committed_bit(&self, e: &CommittedEntry) -> u32 {
        (e.index - 1) * (self.max_term + 1) + e.term
    }

    fn encode_committed(&self, committed: &BTreeSet<CommittedEntry>) -> u128 {
        committed
            .iter()
            .fold(0u128, |acc, e| acc | 1u128 << self.committed_bit(e))
    }

    fn pack(&self, codes: &[u64], committed: u128) -> u128 {
        let base = self.n as u32 * self.server_bits;
        let mut key = if base >= 128 { 0 } else { committed << base };
        for (k, &c) in codes.iter().enumerate() {
            key |= u128::from(c) << (k as u32 * self.server_bits);
        }
        key
    }

    /// Exact encoding of `g`; the state must lie within the bounds.
    pub(crate) fn encode(&self, g: &GlobalState) -> u128 {
        let codes: Vec<u64> = g.servers().map(|(_, s)| self.encode_server(s)).collect();
        self.pack(&codes, self.encode_committed(&g.committed))
    }

    pub(crate) fn decode(&self, key: u128) -> GlobalState {
        let mask = (1u128 << self.server_bits) - 1;
        let servers = (0..self.n)
            .map(|k| self.decode_server(((key >> (k as u32 * self.server_bits)) & mask) as u64))
            .collect();
        let base = self.n as u32 * self.server_bits;
        let bits = if base >= 128 { 0 } else { key >> base };
        let mut committed = BTreeSet::new();
        for index in 1..=self.max_len as u32 {
            for term in 0..=self.max_term {
                let e = CommittedEntry::new(index, term);
                if bits >> self.committed_bit(&e) & 1 == 1 {
                    committed.insert(e);
                }
            }
        }
        GlobalState::from_parts(self.universe, servers, committed)
    }

    /// Least encoding over the symmetry group; the exact encoding when symmetry is off.
    pub(crate) fn canonical_key(&self, g: &GlobalState) -> u128 {
        let codes: Vec<u64> = g.servers().map(|(_, s)| self.encode_server(s)).collect();
        let committed = self.encode_committed(&g.committed);
        if self.perms.len() == 1 {
            return self.pack(&codes, committed);
        }
        let member_mask = (1u64 << self.n) - 1;
        let mut moved = vec![0u64; self.n];
        self.perms
            .iter()
            .map(|p| {
                for (i, &c) in codes.iter().enumerate() {
                    let m = p.masks[(c & member_mask) as usize];
                    moved[p.target[i]] = (c & !member_mask) | u64::from(m);
                }
                self.pack(&moved, committed)
            })
            .min()
            .expect("group contains the identity")
    }
}

fn identity(n: usize) -> Perm {
    perm_from((0..n).collect())
}

fn perm_from(target: Vec<usize>) -> Perm {
    let n = target.len();
    let masks = (0..1u32 << n)
        .map(|m| {
            (0..n)
                .filter(|&i| m >> i & 1 == 1)
                .fold(0, |acc, i| acc | 1 << target[i])
        })
        .collect();
    Perm { target, masks }
}

/// Permutations of `0..n` mapping the positions of `fixed` onto themselves.
fn stabilizer(n: usize, fixed: MemberSet) -> Vec<Perm> {
    let inside = |i: usize| fixed.bits() >> (i + 1) & 1 == 1;
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    permutations(&mut current, 0, &mut |p| {
        if (0..n).all(|i| inside(i) == inside(p[i])) {
            out.push(perm_from(p.to_vec()));
        }
    });
    out
}

fn permutations(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, visit);
        v.swap(k, i);
    }
}

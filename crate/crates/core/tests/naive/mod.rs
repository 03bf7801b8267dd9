//! A naive recursive enumerator that shares no code with the explorer: its
//! own state type, quorums by subset enumeration, guards transcribed
//! directly from the protocol rules.

use std::collections::BTreeSet;

use logless_reconfig::protocol::GlobalState;
use serde_json::json;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Server {
    term: u32,
    primary: bool,
    members: Vec<usize>,
    version: u32,
    cterm: u32,
    log: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct State {
    servers: Vec<Server>,
    committed: BTreeSet<(usize, u32)>,
}

pub struct Limits {
    pub term: u32,
    pub len: usize,
    pub version: u32,
    pub logless: bool,
}

fn subsets(set: &[usize]) -> Vec<Vec<usize>> {
    (0..1u32 << set.len())
        .map(|mask| {
            set.iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, &x)| x)
                .collect()
        })
        .collect()
}

fn quorums(m: &[usize]) -> Vec<Vec<usize>> {
    subsets(m)
        .into_iter()
        .filter(|q| 2 * q.len() > m.len())
        .collect()
}

fn last_term(log: &[u32]) -> u32 {
    log.last().copied().unwrap_or(0)
}

fn newer(a: &Server, b: &Server) -> bool {
    a.cterm > b.cterm || (a.cterm == b.cterm && a.version > b.version)
}

fn successors(g: &State, lim: &Limits) -> Vec<State> {
    let n = g.servers.len();
    let ids: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let si = &g.servers[i];
        // Reconfig
        if si.primary {
            let q1 = quorums(&si.members).iter().any(|q| {
                q.iter()
                    .all(|&j| g.servers[j].version == si.version && g.servers[j].cterm == si.cterm)
            });
            let q2 = quorums(&si.members)
                .iter()
                .any(|q| q.iter().all(|&j| g.servers[j].term == si.term));
            let in_term: Vec<_> = g.committed.iter().filter(|c| c.1 == si.term).collect();
            let p1 = lim.logless
                || ((g.committed.is_empty() || !in_term.is_empty())
                    && quorums(&si.members).iter().any(|q| {
                        q.iter().all(|&j| {
                            let sj = &g.servers[j];
                            sj.term == si.term
                                && in_term
                                    .iter()
                                    .all(|c| sj.log.get(c.0 - 1) == Some(&si.term))
                        })
                    }));
            if q1 && q2 && p1 {
                for new in subsets(&ids).into_iter().filter(|m| !m.is_empty()) {
                    let overlap = quorums(&si.members).iter().all(|a| {
                        quorums(&new)
                            .iter()
                            .all(|b| a.iter().any(|x| b.contains(x)))
                    });
                    if overlap {
                        let mut h = g.clone();
                        h.servers[i].members = new;
                        h.servers[i].version += 1;
                        out.push(h);
                    }
                }
            }
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let sj = &g.servers[j];
            // SendConfig i -> j
            if !sj.primary && newer(si, sj) {
                let mut h = g.clone();
                h.servers[j].members = si.members.clone();
                h.servers[j].version = si.version;
                h.servers[j].cterm = si.cterm;
                out.push(h);
            }
            // UpdateTerms i -> j
            if si.term > sj.term {
                let mut h = g.clone();
                h.servers[j].term = si.term;
                h.servers[j].primary = false;
                out.push(h);
            }
            if lim.logless {
                continue;
            }
            // GetEntries: j pulls from i
            let (li, lj) = (&si.log, &sj.log);
            if !sj.primary
                && li.len() > lj.len()
                && (lj.is_empty() || lj.last() == li.get(lj.len() - 1))
            {
                let mut h = g.clone();
                h.servers[j].log.push(li[lj.len()]);
                out.push(h);
            }
            // RollbackEntries: j rolls back against i
            if !sj.primary && last_term(lj) < last_term(li) && !li.starts_with(lj) {
                let mut h = g.clone();
                h.servers[j].log.pop();
                out.push(h);
            }
        }
        // BecomeLeader
        for q in quorums(&si.members).into_iter().filter(|q| q.contains(&i)) {
            let ok = q.iter().all(|&v| {
                let sv = &g.servers[v];
                !newer(sv, si)
                    && si.term + 1 > sv.term
                    && (lim.logless
                        || (last_term(&si.log), si.log.len()) >= (last_term(&sv.log), sv.log.len()))
            });
            if ok {
                let mut h = g.clone();
                for &v in &q {
                    h.servers[v].term = si.term + 1;
                    h.servers[v].primary = v == i;
                }
                h.servers[i].cterm = si.term + 1;
                out.push(h);
            }
        }
        if lim.logless {
            continue;
        }
        // ClientRequest
        if si.primary {
            let mut h = g.clone();
            h.servers[i].log.push(si.term);
            out.push(h);
        }
        // CommitEntry
        if si.primary && !si.log.is_empty() {
            let len = si.log.len();
            for q in quorums(&si.members) {
                let ok = q.iter().all(|&v| {
                    let sv = &g.servers[v];
                    sv.log.get(len - 1) == Some(&si.term) && sv.term == si.term
                });
                if ok {
                    let mut h = g.clone();
                    h.committed.insert((len, si.term));
                    out.push(h);
                }
            }
        }
    }
    out.retain(|h| {
        h.servers
            .iter()
            .all(|s| s.term <= lim.term && s.log.len() <= lim.len && s.version <= lim.version)
    });
    out
}

fn visit(g: State, lim: &Limits, seen: &mut BTreeSet<State>) {
    if !seen.insert(g.clone()) {
        return;
    }
    for h in successors(&g, lim) {
        visit(h, lim, seen);
    }
}

pub fn naive_reachable(n: usize, lim: &Limits) -> BTreeSet<State> {
    let init = State {
        servers: vec![
            Server {
                term: 0,
                primary: false,
                members: (0..n).collect(),
                version: 1,
                cterm: 0,
                log: Vec::new(),
            };
            n
        ],
        committed: BTreeSet::new(),
    };
    let mut seen = BTreeSet::new();
    visit(init, lim, &mut seen);
    seen
}

/// Server `k` of the naive model is `n{k+1}`.
pub fn to_global(g: &State) -> GlobalState {
    let name = |k: usize| format!("n{}", k + 1);
    let servers: serde_json::Map<String, serde_json::Value> = g
        .servers
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let members: Vec<String> = s.members.iter().map(|&m| name(m)).collect();
            let role = if s.primary { "Primary" } else { "Secondary" };
            let value = json!({
                "term": s.term,
                "role": role,
                "config": {"members": members, "version": s.version, "term": s.cterm},
                "log": s.log,
            });
            (name(k), value)
        })
        .collect();
    let committed: Vec<_> = g.committed.iter().map(|&(i, t)| json!([i, t])).collect();
    serde_json::from_value(json!({"servers": servers, "committed": committed})).unwrap()
}

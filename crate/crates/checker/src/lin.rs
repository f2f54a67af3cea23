//! Linearizability search over small histories.
//!
//! The search resolves every operation either by linearizing it (its
//! sequential result must match, when known) or by dropping it (optional
//! operations only). An operation is a candidate only once every earlier
//! real-time-ordered operation is resolved; dropping is an explicit
//! resolving step so an unresolved optional op cannot block later ones.
//! States are memoized on (resolved mask, abstract set contents), which
//! keeps the search tractable up to the op cap.

use std::collections::{BTreeSet, HashMap, HashSet};

use itertools::Itertools;

use crate::history::History;
use crate::seq::{OpTag, SeqSet};

/// Largest history the exhaustive search accepts before refusing.
pub const DEFAULT_OP_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass { witness: Vec<u64> },
    Fail { certificate: String },
    Refused { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Verdict::Pass { witness } => {
                serde_json::json!({ "pass": true, "witness": witness })
            }
            Verdict::Fail { certificate } => {
                serde_json::json!({ "pass": false, "certificate": certificate })
            }
            Verdict::Refused { reason } => {
                serde_json::json!({ "pass": null, "refused": reason })
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOp {
    pub id: u64,
    pub tag: OpTag,
    pub key: i64,
    pub invoke: u64,
    /// `u64::MAX` when the op never responded.
    pub respond: u64,
    /// `None` accepts any sequential result.
    pub result: Option<bool>,
    /// Optional ops may be dropped instead of linearized.
    pub optional: bool,
}

impl SearchOp {
    fn render(&self) -> String {
        let res = match self.result {
            Some(r) => r.to_string(),
            None => "?".to_string(),
        };
        let hi = if self.respond == u64::MAX {
            "inf".to_string()
        } else {
            self.respond.to_string()
        };
        let opt = if self.optional { " optional" } else { "" };
        format!(
            "op {} {}({})={} [{},{}]{}",
            self.id,
            self.tag.name(),
            self.key,
            res,
            self.invoke,
            hi,
            opt
        )
    }
}

fn certificate(ops: &[SearchOp], init: &BTreeSet<i64>) -> String {
    let mut s = format!("no valid linearization with initial set {:?};", init);
    for o in ops {
        s.push_str("\n  ");
        s.push_str(&o.render());
    }
    s
}

struct Search<'a> {
    ops: &'a [SearchOp],
    required: u32,
    bit_of: HashMap<i64, u32>,
    memo: HashSet<(u32, u64)>,
}

impl Search<'_> {
    fn set_mask(&self, set: &SeqSet) -> u64 {
        let mut m = 0u64;
        for (k, b) in &self.bit_of {
            if set.keys().contains(k) {
                m |= 1u64 << b;
            }
        }
        m
    }

    fn go(&mut self, set: &mut SeqSet, done: u32, path: &mut Vec<u64>) -> bool {
        if done & self.required == self.required {
            return true;
        }
        let state = (done, self.set_mask(set));
        if self.memo.contains(&state) {
            return false;
        }
        'cand: for i in 0..self.ops.len() {
            if done & (1 << i) != 0 {
                continue;
            }
            for j in 0..self.ops.len() {
                if j != i
                    && done & (1 << j) == 0
                    && self.ops[j].respond < self.ops[i].invoke
                {
                    continue 'cand;
                }
            }
            let o = self.ops[i];
            let r = set.apply(o.tag, o.key);
            if o.result.is_none() || o.result == Some(r) {
                path.push(o.id);
                if self.go(set, done | (1 << i), path) {
                    return true;
                }
                path.pop();
            }
            set.revert(o.tag, o.key, r);
            if o.optional && self.go(set, done | (1 << i), path) {
                return true;
            }
        }
        self.memo.insert(state);
        false
    }
}

/// Exhaustive search for a linearization of `ops` over an abstract set
/// starting at `init`. Histories larger than `cap` are refused.
pub fn search_linearization(
    ops: &[SearchOp],
    init: &BTreeSet<i64>,
    cap: usize,
) -> Verdict {
    if ops.len() > cap {
        return Verdict::Refused {
            reason: format!("{} ops exceeds search cap {}", ops.len(), cap),
        };
    }
    let required = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.optional)
        .fold(0u32, |m, (i, _)| m | (1 << i));
    let mut bit_of = HashMap::new();
    for o in ops {
        let n = bit_of.len() as u32;
        bit_of.entry(o.key).or_insert(n);
    }
    let mut search = Search {
        ops,
        required,
        bit_of,
        memo: HashSet::new(),
    };
    let mut set = SeqSet::new(init);
    let mut path = Vec::new();
    if search.go(&mut set, 0, &mut path) {
        Verdict::Pass { witness: path }
    } else {
        Verdict::Fail {
            certificate: certificate(ops, init),
        }
    }
}

/// Checks a complete, crash-free history for linearizability.
pub fn check_linearizable(h: &History, init: &BTreeSet<i64>) -> Verdict {
    if !h.crash_seqs.is_empty() {
        return Verdict::Refused {
            reason: "history contains a crash; use the durable or strict checker"
                .into(),
        };
    }
    if h.ops.iter().any(|o| o.is_pending()) {
        return Verdict::Refused {
            reason: "history has pending ops and no crash".into(),
        };
    }
    let ops: Vec<SearchOp> = h
        .ops
        .iter()
        .map(|o| SearchOp {
            id: o.op_id,
            tag: o.tag,
            key: o.key,
            invoke: o.invoke_seq,
            respond: o.respond_seq().unwrap_or(u64::MAX),
            result: o.result(),
            optional: false,
        })
        .collect();
    search_linearization(&ops, init, DEFAULT_OP_CAP)
}

/// Brute-force oracle: tries every drop subset of optional ops and every
/// real-time-respecting permutation of the rest. Intended for tiny
/// histories only.
pub fn check_linearizable_permutations(
    ops: &[SearchOp],
    init: &BTreeSet<i64>,
) -> Verdict {
    let opt_idx: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.optional)
        .map(|(i, _)| i)
        .collect();
    for drop_bits in 0u32..(1 << opt_idx.len()) {
        let kept: Vec<usize> = (0..ops.len())
            .filter(|&i| match opt_idx.iter().position(|&x| x == i) {
                Some(p) => drop_bits & (1 << p) == 0,
                None => true,
            })
            .collect();
        let n = kept.len();
        for perm in kept.into_iter().permutations(n) {
            let rt_ok = (0..perm.len()).all(|a| {
                (a + 1..perm.len())
                    .all(|b| ops[perm[b]].respond >= ops[perm[a]].invoke)
            });
            if !rt_ok {
                continue;
            }
            let mut set = SeqSet::new(init);
            let mut ok = true;
            for &i in &perm {
                let r = set.apply(ops[i].tag, ops[i].key);
                if ops[i].result.is_some() && ops[i].result != Some(r) {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Verdict::Pass {
                    witness: perm.iter().map(|&i| ops[i].id).collect(),
                };
            }
        }
    }
    Verdict::Fail {
        certificate: certificate(ops, init),
    }
}

//! Strict linearizability with effect witnesses.
//!
//! A crash cuts off every in-flight operation: if the witness completes
//! one, its effect must land before the crash, never after. An in-flight
//! update is eligible for completion only when the log shows its key
//! write (the volatile_effect annotation) before the crash; everything
//! else in flight is forcibly dropped. Eligible ops may still be dropped,
//! since their effect may not have reached persistence. In-flight reads
//! are always dropped. Without a crash this degrades to plain
//! linearizability with in-flight ops optional.

use std::collections::BTreeSet;

use crate::history::{History, OpRecord};
use crate::lin::{search_linearization, SearchOp, Verdict, DEFAULT_OP_CAP};

pub fn check_sle(h: &History, init: &BTreeSet<i64>) -> Verdict {
    check_sle_capped(h, init, DEFAULT_OP_CAP)
}

pub fn check_sle_capped(h: &History, init: &BTreeSet<i64>, cap: usize) -> Verdict {
    if h.crash_seqs.len() > 1 {
        return Verdict::Refused {
            reason: format!(
                "history has {} crashes; at most 1 is supported",
                h.crash_seqs.len()
            ),
        };
    }
    if h.ops.len() > cap {
        return Verdict::Refused {
            reason: format!("{} ops exceeds search cap {}", h.ops.len(), cap),
        };
    }
    for o in &h.ops {
        if o.tag.is_update()
            && o.result() == Some(true)
            && o.volatile_effect_seq.is_none()
        {
            return Verdict::Refused {
                reason: format!(
                    "completed successful {} op {} has no key-write annotation; \
                     the log is not instrumented",
                    o.tag.name(),
                    o.op_id
                ),
            };
        }
    }
    let crash = h.crash_seqs.first().copied();
    let mut ops = Vec::new();
    let mut forced: Vec<&OpRecord> = Vec::new();
    for o in &h.ops {
        if o.is_pending() {
            let eligible = o.tag.is_update()
                && matches!((o.volatile_effect_seq, crash),
                    (Some(w), Some(c)) if w < c);
            if crash.is_none() {
                ops.push(SearchOp {
                    id: o.op_id,
                    tag: o.tag,
                    key: o.key,
                    invoke: o.invoke_seq,
                    respond: u64::MAX,
                    result: None,
                    optional: true,
                });
            } else if eligible {
                ops.push(SearchOp {
                    id: o.op_id,
                    tag: o.tag,
                    key: o.key,
                    invoke: o.invoke_seq,
                    respond: crash.unwrap(),
                    result: None,
                    optional: true,
                });
            } else {
                forced.push(o);
            }
        } else {
            ops.push(SearchOp {
                id: o.op_id,
                tag: o.tag,
                key: o.key,
                invoke: o.invoke_seq,
                respond: o.respond_seq().unwrap_or(u64::MAX),
                result: o.result(),
                optional: false,
            });
        }
    }
    match search_linearization(&ops, init, cap) {
        Verdict::Fail { mut certificate } => {
            for o in &forced {
                certificate.push_str(&format!(
                    "\n  forced drop: op {} {}({}) invoked at {} with no key write before the crash",
                    o.op_id,
                    o.tag.name(),
                    o.key,
                    o.invoke_seq
                ));
            }
            Verdict::Fail { certificate }
        }
        v => v,
    }
}

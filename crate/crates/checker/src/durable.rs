//! Durable linearizability over merged pre/post-crash histories.
//!
//! Sequence numbers stay globally ordered across the crash, so checking
//! durable linearizability reduces to plain linearizability of the merged
//! history where each op pending at the crash is optional: it may be
//! dropped, or completed with an unconstrained result anywhere after its
//! invocation. Completed ops keep their real-time interval, which forces
//! every pre-crash response to be visible to every post-crash operation.

use std::collections::BTreeSet;

use crate::history::History;
use crate::lin::{search_linearization, SearchOp, Verdict, DEFAULT_OP_CAP};

pub fn check_durable(h: &History, init: &BTreeSet<i64>) -> Verdict {
    check_durable_capped(h, init, DEFAULT_OP_CAP)
}

pub fn check_durable_capped(
    h: &History,
    init: &BTreeSet<i64>,
    cap: usize,
) -> Verdict {
    if h.crash_seqs.len() > 1 {
        return Verdict::Refused {
            reason: format!("history has {} crashes; at most 1 is supported", h.crash_seqs.len()),
        };
    }
    if h.ops.len() > cap {
        return Verdict::Refused {
            reason: format!("{} ops exceeds search cap {}", h.ops.len(), cap),
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
            optional: o.is_pending(),
        })
        .collect();
    search_linearization(&ops, init, cap)
}

//! Operation histories extracted from event logs.
//!
//! A history is the invoke/respond structure of a log plus the effect
//! annotations the instrumented lists emit: the volatile effect (the
//! link-installing, unlinking, or marking write) and the persist effect
//! (the durable-bit write). Crash markers split the pre- and post-crash
//! epochs; sequence numbers stay globally ordered across a merged log.

use std::collections::HashMap;

use nvset_core::list::{ContainsVariant, SetImpl};
use nvset_core::substrate::{Event, EventKind};

use crate::seq::OpTag;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpStatus {
    Completed { respond_seq: u64, result: bool },
    Pending,
}

#[derive(Clone, Copy, Debug)]
pub struct OpRecord {
    pub op_id: u64,
    pub worker: usize,
    pub tag: OpTag,
    pub key: i64,
    pub invoke_seq: u64,
    pub status: OpStatus,
    /// Sequence of the rmw that volatilely installed, unlinked, or marked.
    pub volatile_effect_seq: Option<u64>,
    /// Sequence of the rmw that set the durable bit for this op's effect.
    pub persist_effect_seq: Option<u64>,
}

impl OpRecord {
    pub fn respond_seq(&self) -> Option<u64> {
        match self.status {
            OpStatus::Completed { respond_seq, .. } => Some(respond_seq),
            OpStatus::Pending => None,
        }
    }

    pub fn result(&self) -> Option<bool> {
        match self.status {
            OpStatus::Completed { result, .. } => Some(result),
            OpStatus::Pending => None,
        }
    }

    pub fn is_pending(&self) -> bool {
        matches!(self.status, OpStatus::Pending)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("respond for unknown op {0}")]
    RespondWithoutInvoke(u64),
    #[error("op {0} invoked twice")]
    DuplicateInvoke(u64),
    #[error("op {0} responded twice")]
    DuplicateRespond(u64),
    #[error("worker {worker} invoked op {op} while op {open} was still open")]
    OverlappingOps { worker: usize, op: u64, open: u64 },
    #[error("unknown op kind {0:?}")]
    UnknownOpKind(String),
    #[error("invoke without op id at seq {0}")]
    MissingOpId(u64),
}

#[derive(Clone, Debug, Default)]
pub struct History {
    /// Operations in invoke order.
    pub ops: Vec<OpRecord>,
    pub crash_seqs: Vec<u64>,
    pub impl_kind: Option<SetImpl>,
    pub variant: Option<ContainsVariant>,
    /// Whether any effect annotation appears in the log.
    pub instrumented: bool,
    pub max_seq: u64,
}

impl History {
    pub fn from_events(events: &[Event]) -> Result<History, HistoryError> {
        let mut h = History::default();
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut open: HashMap<usize, u64> = HashMap::new();
        for e in events {
            h.max_seq = h.max_seq.max(e.seq);
            match e.kind {
                EventKind::Invoke => {
                    let op_id = e.op.ok_or(HistoryError::MissingOpId(e.seq))?;
                    if index.contains_key(&op_id) {
                        return Err(HistoryError::DuplicateInvoke(op_id));
                    }
                    let worker = e.worker.unwrap_or(usize::MAX);
                    if let Some(&prev) = open.get(&worker) {
                        return Err(HistoryError::OverlappingOps {
                            worker,
                            op: op_id,
                            open: prev,
                        });
                    }
                    let kind_str = e.op_kind.clone().unwrap_or_default();
                    let tag = OpTag::parse(&kind_str)
                        .ok_or(HistoryError::UnknownOpKind(kind_str))?;
                    open.insert(worker, op_id);
                    index.insert(op_id, h.ops.len());
                    h.ops.push(OpRecord {
                        op_id,
                        worker,
                        tag,
                        key: e.key.unwrap_or(0),
                        invoke_seq: e.seq,
                        status: OpStatus::Pending,
                        volatile_effect_seq: None,
                        persist_effect_seq: None,
                    });
                }
                EventKind::Respond => {
                    let op_id = e.op.ok_or(HistoryError::MissingOpId(e.seq))?;
                    let &i = index
                        .get(&op_id)
                        .ok_or(HistoryError::RespondWithoutInvoke(op_id))?;
                    let rec = &mut h.ops[i];
                    if !rec.is_pending() {
                        return Err(HistoryError::DuplicateRespond(op_id));
                    }
                    rec.status = OpStatus::Completed {
                        respond_seq: e.seq,
                        result: e.result.unwrap_or(false),
                    };
                    open.remove(&rec.worker);
                }
                EventKind::Note => {
                    let (Some(op_id), Some(note)) = (e.op, e.note.as_deref()) else {
                        continue;
                    };
                    let Some(&i) = index.get(&op_id) else {
                        continue;
                    };
                    let at = e.ref_seq.unwrap_or(e.seq);
                    match note {
                        "volatile_effect" => {
                            h.instrumented = true;
                            h.ops[i].volatile_effect_seq.get_or_insert(at);
                        }
                        "persist_effect" => {
                            h.instrumented = true;
                            h.ops[i].persist_effect_seq.get_or_insert(at);
                        }
                        _ => {}
                    }
                }
                EventKind::Crash => {
                    h.crash_seqs.push(e.seq);
                    open.clear();
                }
                EventKind::Meta => {
                    if let Some(m) = &e.meta {
                        if h.impl_kind.is_none() {
                            h.impl_kind = m
                                .get("impl")
                                .and_then(|v| v.as_str())
                                .and_then(SetImpl::parse);
                        }
                        if h.variant.is_none() {
                            h.variant = m
                                .get("variant")
                                .and_then(|v| v.as_str())
                                .and_then(ContainsVariant::parse);
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(h)
    }

    pub fn op(&self, op_id: u64) -> Option<&OpRecord> {
        self.ops.iter().find(|o| o.op_id == op_id)
    }

    pub fn completed(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| !o.is_pending())
    }

    pub fn pending(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.is_pending())
    }
}

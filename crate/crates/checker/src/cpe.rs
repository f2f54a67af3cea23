//! Current persistence effect: where an update's outcome reaches the
//! persistent image.
//!
//! The image at a sequence number is folded from the log alone: durable
//! allocations seed cells, commits overwrite them, and a crash starts a
//! fresh memory, so only events after the latest crash at or before the
//! cut contribute. An update's persistence trace follows its key's
//! membership in the recovered abstract set across every image change
//! inside the op's window; a successful insert should flip it in exactly
//! once, a successful remove should flip it out exactly once.

use std::collections::HashMap;

use nvset_core::list::SetImpl;
use nvset_core::recovery::{
    persistent_abstract_set, ImageCell, PersistentImage, RecoveryError,
};
use nvset_core::substrate::{Event, EventKind, Word};

use crate::seq::OpTag;

#[derive(Debug, thiserror::Error)]
pub enum CpeError {
    #[error("op {0} not found in the log")]
    UnknownOp(u64),
    #[error("event log is not a simulator history: {0}")]
    NotSimHistory(String),
    #[error(transparent)]
    BrokenImage(#[from] RecoveryError),
}

/// One membership change of the op's key in the persistent abstract set.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Flip {
    /// Sequence of the commit or durable allocation that caused it.
    pub seq: u64,
    pub now_in: bool,
}

#[derive(Clone, Debug)]
pub struct CpeReport {
    pub op_id: u64,
    pub tag: OpTag,
    pub key: i64,
    pub invoke_seq: u64,
    /// End of the window: response, or the crash that cut the op off.
    pub upper_seq: u64,
    pub initially_in: bool,
    pub flips: Vec<Flip>,
    /// The unique flip in the op's direction, when there is exactly one.
    pub cpe_seq: Option<u64>,
}

/// Folds the persistent image as of `upto` from the event log.
pub fn image_upto(events: &[Event], upto: u64) -> Result<PersistentImage, CpeError> {
    let epoch_start = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Crash) && e.seq <= upto)
        .map(|e| e.seq)
        .max()
        .unwrap_or(0);
    let mut img = PersistentImage::default();
    let mut meta: HashMap<Word, (i64, u64)> = HashMap::new();
    for e in events {
        if e.seq > upto || (epoch_start > 0 && e.seq <= epoch_start) {
            continue;
        }
        fold_event(e, &mut img, &mut meta)?;
    }
    Ok(img)
}

fn fold_event(
    e: &Event,
    img: &mut PersistentImage,
    meta: &mut HashMap<Word, (i64, u64)>,
) -> Result<bool, CpeError> {
    match e.kind {
        EventKind::Alloc => {
            let cell = e
                .cell
                .ok_or_else(|| CpeError::NotSimHistory("alloc without cell".into()))?;
            let key = e.key.unwrap_or(0);
            let value = e.value.unwrap_or(0);
            meta.insert(cell, (key, value));
            if e.durable == Some(true) {
                let pair = e.value_after.ok_or_else(|| {
                    CpeError::NotSimHistory("alloc without init value".into())
                })?;
                img.cells.insert(cell, ImageCell { pair, key, value });
                return Ok(true);
            }
            Ok(false)
        }
        EventKind::Commit => {
            let cell = e
                .cell
                .ok_or_else(|| CpeError::NotSimHistory("commit without cell".into()))?;
            let pair = e.value_after.ok_or_else(|| {
                CpeError::NotSimHistory("commit without value".into())
            })?;
            let &(key, value) = meta.get(&cell).ok_or_else(|| {
                CpeError::NotSimHistory(format!("commit to unallocated cell {cell:#x}"))
            })?;
            img.cells.insert(cell, ImageCell { pair, key, value });
            Ok(true)
        }
        _ => Ok(false),
    }
}

/// Traces the persistence effect of the op across its execution window.
pub fn find_cpe(
    events: &[Event],
    op_id: u64,
    impl_kind: SetImpl,
) -> Result<CpeReport, CpeError> {
    let invoke = events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Invoke) && e.op == Some(op_id))
        .ok_or(CpeError::UnknownOp(op_id))?;
    let invoke_seq = invoke.seq;
    let key = invoke
        .key
        .ok_or_else(|| CpeError::NotSimHistory("invoke without key".into()))?;
    let tag = invoke
        .op_kind
        .as_deref()
        .and_then(OpTag::parse)
        .ok_or_else(|| CpeError::NotSimHistory("invoke without op kind".into()))?;
    let respond_seq = events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Respond) && e.op == Some(op_id))
        .map(|e| e.seq);
    let upper_seq = match respond_seq {
        Some(s) => s,
        None => events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Crash) && e.seq > invoke_seq)
            .map(|e| e.seq)
            .unwrap_or_else(|| events.iter().map(|e| e.seq).max().unwrap_or(invoke_seq)),
    };

    // Rebuild the image up to the invocation, then track the key across
    // every image change inside the window. A crash cannot occur inside a
    // completed op's window, and a pending op's window ends at the crash,
    // so the epoch never changes mid-window.
    let mut img = image_upto(events, invoke_seq)?;
    let mut meta: HashMap<Word, (i64, u64)> = HashMap::new();
    for e in events {
        if e.seq <= invoke_seq && matches!(e.kind, EventKind::Alloc) {
            if let (Some(cell), Some(k)) = (e.cell, e.key) {
                meta.insert(cell, (k, e.value.unwrap_or(0)));
            }
        }
    }
    let initially_in = persistent_abstract_set(&img, impl_kind)?.contains(&key);
    let mut in_now = initially_in;
    let mut flips = Vec::new();
    for e in events {
        if e.seq <= invoke_seq || e.seq > upper_seq {
            continue;
        }
        if fold_event(e, &mut img, &mut meta)? {
            let now = persistent_abstract_set(&img, impl_kind)?.contains(&key);
            if now != in_now {
                flips.push(Flip {
                    seq: e.seq,
                    now_in: now,
                });
                in_now = now;
            }
        }
    }
    let want = match tag {
        OpTag::Insert => Some(true),
        OpTag::Remove => Some(false),
        OpTag::Contains => None,
    };
    let cpe_seq = want.and_then(|dir| {
        let mut hits = flips.iter().filter(|f| f.now_in == dir);
        match (hits.next(), hits.next()) {
            (Some(f), None) => Some(f.seq),
            _ => None,
        }
    });
    Ok(CpeReport {
        op_id,
        tag,
        key,
        invoke_seq,
        upper_seq,
        initially_in,
        flips,
        cpe_seq,
    })
}

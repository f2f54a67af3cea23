//! Structural invariants checked after every simulated step.
//!
//! The volatile list must stay sorted and acyclic with lawful tag states;
//! every non-durable link must name its last durable value in old; and the
//! persistent image must stay recoverable, with volatile and durable
//! abstract sets differing only by in-flight updates.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::list::SetImpl;
use crate::recovery::{self, ImageCell, PersistentImage};
use crate::substrate::{render_word, CellSnapshot, Word, NIL};
use crate::taglink::{is_dflagged, is_durable, is_marked, unmark};

#[derive(Clone, Copy, Debug)]
pub struct AuditContext {
    pub impl_kind: SetImpl,
    pub head: Word,
    pub tail: Word,
}

/// Keys of operations in flight, by kind.
#[derive(Clone, Default, Debug)]
pub struct PendingOps {
    pub insert_keys: Vec<i64>,
    pub remove_keys: Vec<i64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AuditViolation {
    #[error("cell {}: marked and delete-flagged at once", render_word(*.0))]
    MarkDflagTogether(Word),
    #[error("cell {}: delete flag in a logical-delete list", render_word(*.0))]
    DflagInLd(Word),
    #[error("volatile cycle through {}", render_word(*.0))]
    VolatileCycle(Word),
    #[error("volatile keys out of order: {0} then {1}")]
    VolatileKeyOrder(i64, i64),
    #[error("volatile walk hit missing cell {}", render_word(*.0))]
    VolatileDangling(Word),
    #[error("marked node {} has no delete-flagged parent", render_word(*.0))]
    MarkedWithoutFlaggedParent(Word),
    #[error("marked node {} has a marked successor", render_word(*.0))]
    MarkedSuccessorMarked(Word),
    #[error("cell {}: non-durable link with nil old", render_word(*.0))]
    NonDurableNilOld(Word),
    #[error(
        "cell {}: old {} does not match last durable next {}",
        render_word(*.0), render_word(*.1), render_word(*.2)
    )]
    OldMismatch(Word, Word, Word),
    #[error("cell {}: marked link with non-nil old", render_word(*.0))]
    MarkedOldNotNil(Word),
    #[error("persistent image unrecoverable mid-run: {0}")]
    ImageBroken(#[from] recovery::RecoveryError),
    #[error("durably present key {0} has no pending remove to explain it")]
    DurableExtra(i64),
    #[error("volatile key {0} missing durably with no pending insert")]
    VolatileExtra(i64),
}

/// Walk volatile links from the head; returns nodes in list order.
fn volatile_chain(
    ctx: &AuditContext,
    by_word: &HashMap<Word, &CellSnapshot>,
) -> Result<Vec<Word>, AuditViolation> {
    let mut chain = Vec::new();
    let mut seen: HashSet<Word> = HashSet::new();
    let mut cur = ctx.head;
    loop {
        if !seen.insert(cur) {
            return Err(AuditViolation::VolatileCycle(cur));
        }
        chain.push(cur);
        let cell = by_word
            .get(&cur)
            .ok_or(AuditViolation::VolatileDangling(cur))?;
        if cell.key == i64::MAX {
            return Ok(chain);
        }
        let next = unmark(cell.volatile.next);
        if next == NIL {
            return Err(AuditViolation::VolatileDangling(cur));
        }
        cur = next;
    }
}

pub fn check_invariants(
    ctx: &AuditContext,
    cells: &[CellSnapshot],
    pending: &PendingOps,
) -> Result<(), AuditViolation> {
    let by_word: HashMap<Word, &CellSnapshot> = cells.iter().map(|c| (c.word, c)).collect();

    // Tag lawfulness and old-field provenance on every allocated cell.
    for c in cells {
        let next = c.volatile.next;
        if is_marked(next) && is_dflagged(next) {
            return Err(AuditViolation::MarkDflagTogether(c.word));
        }
        if ctx.impl_kind == SetImpl::Ld && is_dflagged(next) {
            return Err(AuditViolation::DflagInLd(c.word));
        }
        if !is_durable(next) && next != NIL {
            if is_marked(next) {
                // Logical-delete marks drop the durable bit and keep old nil;
                // the mark preserves the last durable successor.
                if c.volatile.old != NIL {
                    return Err(AuditViolation::MarkedOldNotNil(c.word));
                }
                if unmark(next) != unmark(c.last_durable_next) {
                    return Err(AuditViolation::OldMismatch(
                        c.word,
                        c.volatile.old,
                        c.last_durable_next,
                    ));
                }
            } else {
                if c.volatile.old == NIL {
                    return Err(AuditViolation::NonDurableNilOld(c.word));
                }
                if unmark(c.volatile.old) != unmark(c.last_durable_next) {
                    return Err(AuditViolation::OldMismatch(
                        c.word,
                        c.volatile.old,
                        c.last_durable_next,
                    ));
                }
            }
        }
    }

    let chain = volatile_chain(ctx, &by_word)?;

    // Sortedness over the full chain (sentinels included).
    for pair in chain.windows(2) {
        let a = by_word[&pair[0]].key;
        let b = by_word[&pair[1]].key;
        if a >= b {
            return Err(AuditViolation::VolatileKeyOrder(a, b));
        }
    }

    // Physical delete: a reachable marked node sits under a delete-flagged
    // parent and precedes an unmarked node.
    if ctx.impl_kind == SetImpl::Pd {
        for pair in chain.windows(2) {
            let parent = by_word[&pair[0]];
            let node = by_word[&pair[1]];
            if is_marked(node.volatile.next) {
                if !is_dflagged(parent.volatile.next) {
                    return Err(AuditViolation::MarkedWithoutFlaggedParent(node.word));
                }
                let succ = unmark(node.volatile.next);
                if let Some(s) = by_word.get(&succ) {
                    if is_marked(s.volatile.next) {
                        return Err(AuditViolation::MarkedSuccessorMarked(node.word));
                    }
                }
            }
        }
    }

    // Volatile vs durable abstract sets.
    let volatile_set: BTreeSet<i64> = chain
        .iter()
        .map(|w| by_word[w])
        .filter(|c| c.key != i64::MIN && c.key != i64::MAX)
        .filter(|c| match ctx.impl_kind {
            SetImpl::Pd => true,
            SetImpl::Ld => !is_marked(c.volatile.next),
        })
        .map(|c| c.key)
        .collect();

    let mut img = PersistentImage::default();
    for c in cells {
        if let Some(pair) = c.persistent {
            img.cells.insert(
                c.word,
                ImageCell {
                    pair,
                    key: c.key,
                    value: c.value,
                },
            );
        }
    }
    let durable_set = recovery::persistent_abstract_set(&img, ctx.impl_kind)?;

    for k in durable_set.difference(&volatile_set) {
        if !pending.remove_keys.contains(k) {
            return Err(AuditViolation::DurableExtra(*k));
        }
    }
    for k in volatile_set.difference(&durable_set) {
        if !pending.insert_keys.contains(k) {
            return Err(AuditViolation::VolatileExtra(*k));
        }
    }
    Ok(())
}

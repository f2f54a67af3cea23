//! Sorted concurrent set implementations over the persistence substrate.
//!
//! Both lists keep a per-node link pair ⟨next, old⟩. While a link's next
//! value is not yet durable, old names the last durable next value, tagged
//! with the kind of update in flight. A Persist makes the link durable:
//! flush, fence, then one dwcas setting the durable bit and clearing old.

mod ld;
mod pd;

pub use ld::LdSet;
pub use pd::PdSet;

use super::substrate::{Pmem, Word, WordPair, WorkerId, NIL};
use crate::taglink::{is_durable, mark_durable, unmark};

/// How a membership query treats the non-durable links it traverses.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ContainsVariant {
    /// Persist every non-durable link met along the path.
    PersistAll,
    /// Flush along the path, then one fence and deferred durable-bit sets.
    AsyncPersistAll,
    /// Persist only the link that determines the answer.
    PersistLast,
    /// Never flush or fence; reason about pending links via old values.
    PersistFree,
}

impl ContainsVariant {
    pub fn name(self) -> &'static str {
        match self {
            ContainsVariant::PersistAll => "pa",
            ContainsVariant::AsyncPersistAll => "apa",
            ContainsVariant::PersistLast => "pl",
            ContainsVariant::PersistFree => "pf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pa" | "persist-all" => Some(ContainsVariant::PersistAll),
            "apa" | "async-persist-all" => Some(ContainsVariant::AsyncPersistAll),
            "pl" | "persist-last" => Some(ContainsVariant::PersistLast),
            "pf" | "persist-free" => Some(ContainsVariant::PersistFree),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SetImpl {
    /// Physical delete: delete-flag the predecessor, mark, unlink, persist.
    Pd,
    /// Logical delete: a persisted mark is the removal; trimming is cleanup.
    Ld,
}

impl SetImpl {
    pub fn name(self) -> &'static str {
        match self {
            SetImpl::Pd => "pd",
            SetImpl::Ld => "ld",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pd" => Some(SetImpl::Pd),
            "ld" => Some(SetImpl::Ld),
            _ => None,
        }
    }
}

/// Object-safe face of both lists, for harnesses and benchmarks.
pub trait ConcurrentSet: Send + Sync + 'static {
    fn insert(&self, w: WorkerId, key: i64, value: u64) -> bool;
    fn remove(&self, w: WorkerId, key: i64) -> bool;
    /// Uses the list's configured contains variant.
    fn contains(&self, w: WorkerId, key: i64) -> bool;
    fn contains_with(&self, w: WorkerId, variant: ContainsVariant, key: i64) -> bool;
    fn head(&self) -> Word;
    fn tail(&self) -> Word;
    fn impl_kind(&self) -> SetImpl;
    fn variant(&self) -> ContainsVariant;
}

/// Make `node`'s link durable: flush, fence, then try to set the durable bit
/// and clear old in one dwcas. `exp_next` is the non-durable value being
/// persisted; with `exp_old` None the current old is read first. Failure of
/// the final dwcas means someone else advanced the link; that is fine.
///
/// The link's target cell is flushed into the same fence: fences only cover
/// the issuing worker, so a helper persisting someone else's link must
/// carry the linked node to the image itself, or the durable bit could
/// outrun the node it points at.
pub(crate) fn persist<M: Pmem + ?Sized>(
    m: &M,
    w: WorkerId,
    node: Word,
    exp_next: Word,
    exp_old: Option<Word>,
) {
    debug_assert!(!is_durable(exp_next), "persist of a durable link");
    m.flush(w, node);
    let target = unmark(exp_next);
    if target != NIL {
        m.flush(w, target);
    }
    let exp_old = match exp_old {
        Some(o) => o,
        None => m.read(w, node).old,
    };
    m.fence(w);
    let _ = m.dwcas(
        w,
        node,
        WordPair::new(exp_next, exp_old),
        WordPair::new(mark_durable(exp_next), NIL),
    );
}

/// Allocate a node whose link is durable by content and flush its cell. No
/// fence: the successful link-in starts from a clean, single-psync protocol.
pub(crate) fn create_node<M: Pmem + ?Sized>(
    m: &M,
    w: WorkerId,
    key: i64,
    value: u64,
    succ: Word,
) -> Word {
    debug_assert!(is_durable(mark_durable(succ)));
    let n = m.alloc(w, key, value, WordPair::new(mark_durable(succ), NIL));
    m.flush(w, n);
    n
}

/// Keys usable by callers; the sentinels take the two extremes.
pub(crate) fn assert_user_key(key: i64) {
    assert!(
        key > i64::MIN && key < i64::MAX,
        "key {key} collides with a sentinel"
    );
}

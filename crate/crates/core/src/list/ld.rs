//! Logical-delete list.
//!
//! A remove marks the victim's link and persists that mark; the persisted
//! mark is the removal. Trimming the marked node out is cleanup and its
//! unlink value is persisted like any other link write. The mark write
//! clears the durable bit, so a node is deleted exactly when its link is
//! both marked and durable.

use std::sync::Arc;

use super::{assert_user_key, create_node, persist, ConcurrentSet, ContainsVariant, SetImpl};
use crate::substrate::{Annotation, Pmem, Word, WordPair, WorkerId, NIL};
use crate::taglink::{
    is_durable, is_iflagged, is_marked, mark_durable, mark_del, mark_iflag, strip_durable, unmark,
};

pub struct LdSet<M: Pmem> {
    mem: Arc<M>,
    head: Word,
    tail: Word,
    variant: ContainsVariant,
    scratch_cap: usize,
}

impl<M: Pmem> LdSet<M> {
    pub fn new(mem: Arc<M>, variant: ContainsVariant) -> Self {
        Self::build_durable(mem, variant, &[])
    }

    /// Construct a fully durable list holding `items` (strictly ascending
    /// keys). Used for fresh lists, prefill, and recovery.
    pub fn build_durable(mem: Arc<M>, variant: ContainsVariant, items: &[(i64, u64)]) -> Self {
        let tail = mem.alloc_init(i64::MAX, 0, WordPair::new(NIL, NIL));
        let mut succ = tail;
        for &(key, value) in items.iter().rev() {
            assert_user_key(key);
            succ = mem.alloc_init(key, value, WordPair::new(mark_durable(succ), NIL));
        }
        let head = mem.alloc_init(i64::MIN, 0, WordPair::new(mark_durable(succ), NIL));
        LdSet {
            mem,
            head,
            tail,
            variant,
            scratch_cap: 64,
        }
    }

    pub fn with_scratch_cap(mut self, cap: usize) -> Self {
        assert!(cap > 0, "scratch capacity must be positive");
        self.scratch_cap = cap;
        self
    }

    pub fn mem(&self) -> &Arc<M> {
        &self.mem
    }

    /// Deleted means marked and durable.
    fn get_mark(&self, w: WorkerId, node: Word) -> bool {
        let next = self.mem.read(w, node).next;
        is_marked(next) && is_durable(next)
    }

    /// Locate `key`, trimming marked nodes off the path (persisting their
    /// marks first). Afterwards p.key < key <= curr.key held at read time,
    /// with curr observed unmarked, and the path-end links persisted.
    fn find(&self, w: WorkerId, key: i64) -> (Word, Word) {
        let m = &*self.mem;
        let mut gp: Option<Word> = None;
        let mut gpnext = NIL;
        let mut p = self.head;
        let mut pnext = m.read(w, p).next;
        let mut curr = unmark(pnext);
        loop {
            let cpair = m.read(w, curr);
            if is_marked(cpair.next) {
                if !is_durable(cpair.next) {
                    persist(m, w, curr, cpair.next, Some(cpair.old));
                }
                if !is_durable(pnext) {
                    // Trim expects a durable parent link; help it along.
                    persist(m, w, p, pnext, None);
                }
                self.trim(w, p, curr);
                // p itself may be dead; retrying from p cannot decide that,
                // so rewalk from the head.
                gp = None;
                gpnext = NIL;
                p = self.head;
                pnext = m.read(w, p).next;
                curr = unmark(pnext);
                continue;
            }
            if m.key_of(curr) >= key {
                break;
            }
            gp = Some(p);
            gpnext = pnext;
            p = curr;
            pnext = cpair.next;
            curr = unmark(pnext);
        }
        if let Some(g) = gp {
            if !is_durable(gpnext) {
                persist(m, w, g, gpnext, None);
            }
        }
        if !is_durable(pnext) {
            persist(m, w, p, pnext, None);
        }
        (p, curr)
    }

    /// Unlink the marked, durably marked `victim` from `p`. The unlink value
    /// records the marked victim (durable bit stripped) in old.
    fn trim(&self, w: WorkerId, p: Word, victim: Word) {
        let m = &*self.mem;
        let vnext = m.read(w, victim).next;
        debug_assert!(is_marked(vnext) && is_durable(vnext), "trim of live node");
        let succ = unmark(vnext);
        let provenance = mark_del(victim);
        let r = m.dwcas(
            w,
            p,
            WordPair::new(mark_durable(victim), NIL),
            WordPair::new(succ, provenance),
        );
        if r.success {
            m.annotate(
                w,
                Annotation::Unlinked {
                    cell: p,
                    next: succ,
                    victim,
                },
            );
            persist(m, w, p, succ, Some(provenance));
        }
    }

    fn insert_impl(&self, w: WorkerId, key: i64, value: u64) -> bool {
        assert_user_key(key);
        let m = &*self.mem;
        loop {
            let (p, curr) = self.find(w, key);
            if m.key_of(curr) == key {
                return false;
            }
            let newn = create_node(m, w, key, value, curr);
            let r = m.dwcas(
                w,
                p,
                WordPair::new(mark_durable(curr), NIL),
                WordPair::new(newn, mark_iflag(curr)),
            );
            if r.success {
                m.annotate(w, Annotation::LinkInstalled { cell: p, next: newn });
                persist(m, w, p, newn, Some(mark_iflag(curr)));
                return true;
            }
        }
    }

    fn remove_impl(&self, w: WorkerId, key: i64) -> bool {
        assert_user_key(key);
        let m = &*self.mem;
        loop {
            let (p, curr) = self.find(w, key);
            if m.key_of(curr) != key {
                return false;
            }
            let cpair = m.read(w, curr);
            if is_marked(cpair.next) {
                // Another remove got here first; find will trim it.
                continue;
            }
            let base = if is_durable(cpair.next) {
                cpair.next
            } else {
                persist(m, w, curr, cpair.next, Some(cpair.old));
                mark_durable(cpair.next)
            };
            // The mark clears the durable bit: it must reach the image itself.
            let marked = mark_del(strip_durable(base));
            let r = m.dwcas(
                w,
                curr,
                WordPair::new(base, NIL),
                WordPair::new(marked, NIL),
            );
            if r.success {
                m.annotate(w, Annotation::Marked { cell: curr, next: marked });
                persist(m, w, curr, marked, Some(NIL));
                self.trim(w, p, curr);
                return true;
            }
        }
    }

    /// Plain traversal: walks through marked nodes, no repairs.
    fn locate(&self, w: WorkerId, key: i64) -> (Word, Word, Word) {
        let m = &*self.mem;
        let mut p = self.head;
        let mut pnext = m.read(w, p).next;
        let mut curr = unmark(pnext);
        while m.key_of(curr) < key {
            p = curr;
            pnext = m.read(w, p).next;
            curr = unmark(pnext);
        }
        (p, pnext, curr)
    }

    fn contains_persist_all(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let mut p = self.head;
        let curr = loop {
            let pr = m.read(w, p);
            if !is_durable(pr.next) {
                persist(m, w, p, pr.next, Some(pr.old));
            }
            let curr = unmark(pr.next);
            if m.key_of(curr) >= key {
                break curr;
            }
            p = curr;
        };
        m.key_of(curr) == key && !self.get_mark(w, curr)
    }

    fn contains_async_persist_all(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let mut scratch: Vec<(Word, WordPair)> = Vec::new();
        let mut p = self.head;
        let curr = loop {
            let pr = m.read(w, p);
            if !is_durable(pr.next) {
                // Carry the link's target to the image with the link itself.
                m.flush(w, p);
                m.flush(w, unmark(pr.next));
                if scratch.len() < self.scratch_cap {
                    scratch.push((p, pr));
                }
            }
            let curr = unmark(pr.next);
            if m.key_of(curr) >= key {
                break curr;
            }
            p = curr;
        };
        let has = m.key_of(curr) == key && !self.get_mark(w, curr);
        if !scratch.is_empty() {
            m.fence(w);
            for (node, pr) in scratch {
                let now = m.read(w, node);
                if now == pr {
                    let _ = m.dwcas(w, node, pr, WordPair::new(mark_durable(pr.next), NIL));
                }
            }
        }
        has
    }

    fn contains_persist_last(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let (p, pnext, curr) = self.locate(w, key);
        if !is_durable(pnext) {
            persist(m, w, p, pnext, None);
        }
        m.key_of(curr) == key && !self.get_mark(w, curr)
    }

    /// Never flushes or fences. A non-durable link hides either a pending
    /// insert, whose key the durable state cannot hold yet, or a pending
    /// trim of a node whose mark is already durable, so the volatile answer
    /// stands everywhere except the insert window.
    fn contains_persist_free(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let (p, pnext, curr) = self.locate(w, key);
        let has = m.key_of(curr) == key;
        if is_durable(pnext) {
            return has && !self.get_mark(w, curr);
        }
        let old1 = m.read(w, p).old;
        let pr3 = m.read(w, p);
        if pr3.next == pnext && pr3.old == old1 && is_iflagged(old1) {
            return false;
        }
        has && !self.get_mark(w, curr)
    }

    fn contains_impl(&self, w: WorkerId, variant: ContainsVariant, key: i64) -> bool {
        assert_user_key(key);
        match variant {
            ContainsVariant::PersistAll => self.contains_persist_all(w, key),
            ContainsVariant::AsyncPersistAll => self.contains_async_persist_all(w, key),
            ContainsVariant::PersistLast => self.contains_persist_last(w, key),
            ContainsVariant::PersistFree => self.contains_persist_free(w, key),
        }
    }
}

impl<M: Pmem> ConcurrentSet for LdSet<M> {
    fn insert(&self, w: WorkerId, key: i64, value: u64) -> bool {
        self.insert_impl(w, key, value)
    }

    fn remove(&self, w: WorkerId, key: i64) -> bool {
        self.remove_impl(w, key)
    }

    fn contains(&self, w: WorkerId, key: i64) -> bool {
        self.contains_impl(w, self.variant, key)
    }

    fn contains_with(&self, w: WorkerId, variant: ContainsVariant, key: i64) -> bool {
        self.contains_impl(w, variant, key)
    }

    fn head(&self) -> Word {
        self.head
    }

    fn tail(&self) -> Word {
        self.tail
    }

    fn impl_kind(&self) -> SetImpl {
        SetImpl::Ld
    }

    fn variant(&self) -> ContainsVariant {
        self.variant
    }
}

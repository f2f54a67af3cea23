//! Physical-delete list.
//!
//! A remove delete-flags the predecessor link, marks the victim, unlinks it,
//! then persists the new predecessor link. Mark and delete-flag transitions
//! keep the durable bit and are never flushed themselves; only link-install
//! and unlink values reach the persistent image.

use std::sync::Arc;

use super::{assert_user_key, create_node, persist, ConcurrentSet, ContainsVariant, SetImpl};
use crate::substrate::{Annotation, Pmem, Word, WordPair, WorkerId, NIL};
use crate::taglink::{
    is_clean, is_durable, is_dflagged, is_iflagged, is_marked, mark_dflag, mark_durable, mark_del,
    mark_iflag, unmark,
};

struct Find {
    gp: Option<Word>,
    p: Word,
    curr: Word,
}

pub struct PdSet<M: Pmem> {
    mem: Arc<M>,
    head: Word,
    tail: Word,
    variant: ContainsVariant,
    scratch_cap: usize,
}

impl<M: Pmem> PdSet<M> {
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
        PdSet {
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

    /// Locate `key`: afterwards p.key < key <= curr.key held at read time,
    /// and the two links on the path end are persisted if they were not.
    fn find(&self, w: WorkerId, key: i64) -> Find {
        let m = &*self.mem;
        let mut gp = None;
        let mut gpnext = NIL;
        let mut p = self.head;
        let mut pnext = m.read(w, p).next;
        let mut curr = unmark(pnext);
        while m.key_of(curr) < key {
            gp = Some(p);
            gpnext = pnext;
            p = curr;
            pnext = m.read(w, p).next;
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
        Find { gp, p, curr }
    }

    /// The link out of `dirty` is marked or delete-flagged; push the pending
    /// removal forward. `parent` precedes `dirty` when known.
    fn help_update(&self, w: WorkerId, parent: Option<Word>, dirty: Word) {
        let m = &*self.mem;
        let dnext = m.read(w, dirty).next;
        if is_dflagged(dnext) {
            self.help_remove(w, dirty, unmark(dnext));
        } else if is_marked(dnext) {
            // The head is never marked, so a marked node has a known parent.
            if let Some(par) = parent {
                self.help_marked(w, par, dirty);
            }
        }
    }

    /// `parent` is delete-flagged pointing at `victim`: mark the victim,
    /// then unlink it. On return the unlink is durable even when another
    /// helper performed it, so the remover may report completion.
    fn help_remove(&self, w: WorkerId, parent: Word, victim: Word) {
        let m = &*self.mem;
        let flagged = mark_durable(mark_dflag(victim));
        loop {
            let pnow = m.read(w, parent);
            if pnow.next != flagged {
                if !is_durable(pnow.next) {
                    persist(m, w, parent, pnow.next, Some(pnow.old));
                }
                return;
            }
            let vnext = m.read(w, victim).next;
            if is_marked(vnext) {
                self.help_marked(w, parent, victim);
                return;
            }
            if is_dflagged(vnext) {
                self.help_remove(w, victim, unmark(vnext));
                continue;
            }
            if !is_durable(vnext) {
                persist(m, w, victim, vnext, None);
                continue;
            }
            // vnext is clean and durable; the mark keeps the durable bit.
            let r = m.dwcas(
                w,
                victim,
                WordPair::new(vnext, NIL),
                WordPair::new(mark_del(vnext), NIL),
            );
            if r.success || is_marked(r.prior.next) {
                self.help_marked(w, parent, victim);
                return;
            }
        }
    }

    /// `victim` is marked; swing `parent` past it. The unlink value is
    /// non-durable and records the delete-flagged victim in old.
    fn help_marked(&self, w: WorkerId, parent: Word, victim: Word) {
        let m = &*self.mem;
        let succ = unmark(m.read(w, victim).next);
        let flagged = mark_durable(mark_dflag(victim));
        let provenance = mark_dflag(victim);
        let r = m.dwcas(
            w,
            parent,
            WordPair::new(flagged, NIL),
            WordPair::new(succ, provenance),
        );
        if r.success {
            m.annotate(
                w,
                Annotation::Unlinked {
                    cell: parent,
                    next: succ,
                    victim,
                },
            );
            persist(m, w, parent, succ, Some(provenance));
        } else if !is_durable(r.prior.next) {
            // Lost the unlink to a helper; its value must still reach the
            // image before this removal reports completion.
            persist(m, w, parent, r.prior.next, Some(r.prior.old));
        }
    }

    fn insert_impl(&self, w: WorkerId, key: i64, value: u64) -> bool {
        assert_user_key(key);
        let m = &*self.mem;
        loop {
            let f = self.find(w, key);
            if m.key_of(f.curr) == key {
                return false;
            }
            let pnext = m.read(w, f.p).next;
            if !is_clean(pnext) {
                self.help_update(w, f.gp, f.p);
                continue;
            }
            let newn = create_node(m, w, key, value, f.curr);
            let r = m.dwcas(
                w,
                f.p,
                WordPair::new(mark_durable(f.curr), NIL),
                WordPair::new(newn, mark_iflag(f.curr)),
            );
            if r.success {
                m.annotate(w, Annotation::LinkInstalled { cell: f.p, next: newn });
                persist(m, w, f.p, newn, Some(mark_iflag(f.curr)));
                return true;
            }
        }
    }

    fn remove_impl(&self, w: WorkerId, key: i64) -> bool {
        assert_user_key(key);
        let m = &*self.mem;
        loop {
            let f = self.find(w, key);
            if m.key_of(f.curr) != key {
                return false;
            }
            let cnext = m.read(w, f.curr).next;
            if !is_clean(cnext) {
                self.help_update(w, Some(f.p), f.curr);
                continue;
            }
            let pnext = m.read(w, f.p).next;
            if !is_clean(pnext) {
                self.help_update(w, f.gp, f.p);
                continue;
            }
            let r = m.dwcas(
                w,
                f.p,
                WordPair::new(mark_durable(f.curr), NIL),
                WordPair::new(mark_durable(mark_dflag(f.curr)), NIL),
            );
            if r.success {
                m.annotate(w, Annotation::Dflagged { victim: f.curr });
                self.help_remove(w, f.p, f.curr);
                return true;
            }
        }
    }

    /// Plain traversal for queries: no repairs, stops at the first key >= key.
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
        loop {
            let pr = m.read(w, p);
            if !is_durable(pr.next) {
                persist(m, w, p, pr.next, Some(pr.old));
            }
            let curr = unmark(pr.next);
            if m.key_of(curr) >= key {
                return m.key_of(curr) == key;
            }
            p = curr;
        }
    }

    fn contains_async_persist_all(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let mut scratch: Vec<(Word, WordPair)> = Vec::new();
        let mut p = self.head;
        let has = loop {
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
                break m.key_of(curr) == key;
            }
            p = curr;
        };
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
        m.key_of(curr) == key
    }

    /// Never flushes or fences. When the deciding link is still in flight,
    /// the old value plus a double re-read of the pair decides the answer.
    fn contains_persist_free(&self, w: WorkerId, key: i64) -> bool {
        let m = &*self.mem;
        let (p, pnext, curr) = self.locate(w, key);
        let has = m.key_of(curr) == key;
        if is_durable(pnext) {
            return has;
        }
        let old1 = m.read(w, p).old;
        let pr3 = m.read(w, p);
        if pr3.next != pnext || pr3.old != old1 || old1 == NIL {
            // The link moved on or already persisted; the first snapshot
            // was or became durable, answer from it.
            return has;
        }
        if is_iflagged(old1) {
            // A pending insert: the durable state cannot hold the new key.
            return false;
        }
        if has {
            return true;
        }
        // A pending unlink: the durable state still holds the victim.
        m.key_of(unmark(old1)) == key
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

impl<M: Pmem> ConcurrentSet for PdSet<M> {
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
        SetImpl::Pd
    }

    fn variant(&self) -> ContainsVariant {
        self.variant
    }
}

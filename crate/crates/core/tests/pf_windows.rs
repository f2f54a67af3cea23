//! Answers of the persistence-free contains inside each in-flight update
//! window, with the updater parked mid-operation.

use std::sync::Arc;

use nvset_core::substrate::harness::{OpDesc, OpKind, SimHarness};
use nvset_core::substrate::{Event, EventKind, SimConfig, SimPmem, StartOffsets};
use nvset_core::{ConcurrentSet, ContainsVariant, LdSet, PdSet, SetImpl};

fn setup(impl_kind: SetImpl, items: &[(i64, u64)]) -> (Arc<SimPmem>, SimHarness) {
    let mem = Arc::new(SimPmem::new(SimConfig::default(), 2, StartOffsets::default()));
    let set: Arc<dyn ConcurrentSet> = match impl_kind {
        SetImpl::Pd => Arc::new(PdSet::build_durable(
            mem.clone(),
            ContainsVariant::PersistFree,
            items,
        )),
        SetImpl::Ld => Arc::new(LdSet::build_durable(
            mem.clone(),
            ContainsVariant::PersistFree,
            items,
        )),
    };
    let h = SimHarness::new(mem.clone(), Some(set), None);
    (mem, h)
}

fn note_is(name: &'static str) -> impl FnMut(&Event) -> bool {
    move |e| e.kind == EventKind::Note && e.note.as_deref() == Some(name)
}

/// Persistence-free contains on worker 1, run to completion.
fn pf_contains(h: &mut SimHarness, key: i64) -> bool {
    h.assign(1, OpDesc::contains(key)).unwrap();
    for _ in 0..1000 {
        if let Some(c) = h.step(1).unwrap().completed {
            return c.result;
        }
    }
    panic!("contains did not finish");
}

/// Run worker 0's parked operation to completion and return its result.
fn complete(h: &mut SimHarness) -> bool {
    for _ in 0..1000 {
        if let Some(c) = h.step(0).unwrap().completed {
            return c.result;
        }
    }
    panic!("operation did not finish");
}

#[test]
fn pd_pending_unlink_still_answers_present() {
    let (_mem, mut h) = setup(SetImpl::Pd, &[(1, 10), (5, 50)]);
    h.assign(0, OpDesc::remove(5)).unwrap();
    // Park right after the unlink CAS: the victim is off the volatile list
    // but the durable state still holds it through the parent's old path.
    h.step_until(0, note_is("volatile_effect"), 500).unwrap();
    assert!(pf_contains(&mut h, 5));
    assert!(complete(&mut h), "remove finishes");
    assert!(!pf_contains(&mut h, 5));
    assert!(pf_contains(&mut h, 1));
    h.finish();
}

#[test]
fn pd_dflag_window_still_answers_present() {
    let (_mem, mut h) = setup(SetImpl::Pd, &[(1, 10), (5, 50)]);
    h.assign(0, OpDesc::remove(5)).unwrap();
    // Park right after the parent is delete-flagged, before the mark and
    // the unlink.
    h.step_until(0, note_is("dflagged"), 500).unwrap();
    assert!(pf_contains(&mut h, 5));
    assert!(complete(&mut h));
    assert!(!pf_contains(&mut h, 5));
    h.finish();
}

#[test]
fn pd_pending_insert_answers_absent() {
    let (_mem, mut h) = setup(SetImpl::Pd, &[(1, 10), (5, 50)]);
    h.assign(0, OpDesc::insert(3, 30)).unwrap();
    h.step_until(0, note_is("volatile_effect"), 500).unwrap();
    assert!(!pf_contains(&mut h, 3), "linked in volatile memory only");
    assert!(pf_contains(&mut h, 5), "the rest of the list is unaffected");
    assert!(complete(&mut h), "insert finishes");
    assert!(pf_contains(&mut h, 3));
    h.finish();
}

#[test]
fn ld_trim_window_answers_absent() {
    let (_mem, mut h) = setup(SetImpl::Ld, &[(1, 10), (5, 50)]);
    h.assign(0, OpDesc::remove(5)).unwrap();
    // Park right after the physical unlink of the marked node. Its mark is
    // already durable, so the key must read as gone even though the
    // parent's link is still in flight and its old path names the victim.
    h.step_until(0, note_is("unlink"), 500).unwrap();
    assert!(!pf_contains(&mut h, 5));
    assert!(pf_contains(&mut h, 1));
    assert!(complete(&mut h));
    assert!(!pf_contains(&mut h, 5));
    h.finish();
}

#[test]
fn ld_mark_flips_the_answer_when_it_persists() {
    let (_mem, mut h) = setup(SetImpl::Ld, &[(1, 10), (5, 50)]);
    h.assign(0, OpDesc::remove(5)).unwrap();
    // Volatile mark only: a crash here forgets the remove.
    h.step_until(0, note_is("volatile_effect"), 500).unwrap();
    assert!(pf_contains(&mut h, 5));
    // Durable mark: the remove is decided, the node merely awaits its trim.
    h.step_until(0, note_is("persist_effect"), 500).unwrap();
    assert!(!pf_contains(&mut h, 5));
    assert!(complete(&mut h));
    assert!(!pf_contains(&mut h, 5));
    h.finish();
}

#[test]
fn completions_report_their_op_descriptors() {
    let (_mem, mut h) = setup(SetImpl::Pd, &[(1, 10)]);
    h.assign(0, OpDesc::insert(2, 20)).unwrap();
    let done = loop {
        if let Some(c) = h.step(0).unwrap().completed {
            break c;
        }
    };
    assert_eq!(done.desc.kind, OpKind::Insert);
    assert_eq!(done.desc.key, 2);
    assert!(done.result);
    h.finish();
}

//! Per-variant psync cost of contains when the traversal crosses links
//! that are still in flight, measured through the search-class counters.

use std::sync::Arc;

use nvset_core::substrate::harness::{HarnessError, OpDesc, OpKind, SimHarness};
use nvset_core::substrate::{EventKind, SimConfig, SimPmem, StartOffsets};
use nvset_core::{ConcurrentSet, ContainsVariant, LdSet, PdSet, Pmem, SetImpl};

/// Build {1, 5, 9} durable, then park worker 0 inside insert(3) and worker 1
/// inside insert(7), each right after its link CAS and before any persist.
fn stalled(impl_kind: SetImpl) -> (Arc<SimPmem>, SimHarness) {
    let mem = Arc::new(SimPmem::new(SimConfig::default(), 3, StartOffsets::default()));
    let set: Arc<dyn ConcurrentSet> = match impl_kind {
        SetImpl::Pd => Arc::new(PdSet::build_durable(
            mem.clone(),
            ContainsVariant::PersistAll,
            &[(1, 10), (5, 50), (9, 90)],
        )),
        SetImpl::Ld => Arc::new(LdSet::build_durable(
            mem.clone(),
            ContainsVariant::PersistAll,
            &[(1, 10), (5, 50), (9, 90)],
        )),
    };
    let mut h = SimHarness::new(mem.clone(), Some(set), None);
    let installed = |e: &nvset_core::substrate::Event| {
        e.kind == EventKind::Note && e.note.as_deref() == Some("volatile_effect")
    };
    h.assign(0, OpDesc::insert(3, 30)).unwrap();
    h.step_until(0, installed, 500).unwrap();
    h.assign(1, OpDesc::insert(7, 70)).unwrap();
    h.step_until(1, installed, 500).unwrap();
    (mem, h)
}

/// Run one contains on worker 2 and return (answer, flushes, fences) charged
/// to the search class.
fn probe(
    mem: &Arc<SimPmem>,
    h: &mut SimHarness,
    variant: ContainsVariant,
    key: i64,
) -> (bool, u64, u64) {
    let before = mem.stats().search;
    h.assign(
        2,
        OpDesc {
            kind: OpKind::Contains,
            key,
            value: 0,
            variant: Some(variant),
        },
    )
    .unwrap();
    let mut result = None;
    for _ in 0..1000 {
        let rep = h.step(2).unwrap();
        if let Some(c) = rep.completed {
            result = Some(c.result);
            break;
        }
    }
    let after = mem.stats().search;
    (
        result.expect("contains finished"),
        after.flushes - before.flushes,
        after.fences - before.fences,
    )
}

/// Drain the two parked inserts and check they both succeeded.
fn unstall(h: SimHarness) {
    let mut h = h;
    h.run_round_robin(10_000).unwrap();
    let done = h.finish();
    let inserts: Vec<_> = done
        .iter()
        .filter(|c| c.desc.kind == OpKind::Insert)
        .collect();
    assert_eq!(inserts.len(), 2);
    assert!(inserts.iter().all(|c| c.result));
}

#[test]
fn persist_all_pays_a_fence_per_pending_link() {
    let (mem, mut h) = stalled(SetImpl::Pd);
    // Two pending links on the path; each costs flush(link) + flush(target)
    // + fence before the durable-bit CAS.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistAll, 9), (true, 4, 2));
    // Everything on the path is durable now.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistAll, 9), (true, 0, 0));
    unstall(h);
}

#[test]
fn async_persist_all_batches_the_fences() {
    let (mem, mut h) = stalled(SetImpl::Pd);
    assert_eq!(
        probe(&mem, &mut h, ContainsVariant::AsyncPersistAll, 9),
        (true, 4, 1)
    );
    unstall(h);
}

#[test]
fn persist_last_only_pays_for_the_deciding_link() {
    let (mem, mut h) = stalled(SetImpl::Pd);
    // Deciding link 7 -> 9 is durable; the pending links on the way are
    // crossed for free.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistLast, 9), (true, 0, 0));
    // Deciding link 5 -> 7 is the pending insert: one persist.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistLast, 7), (true, 2, 1));
    unstall(h);
}

#[test]
fn persist_free_pays_nothing_and_hides_pending_inserts() {
    let (mem, mut h) = stalled(SetImpl::Pd);
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistFree, 9), (true, 0, 0));
    // Key 3 is linked in volatile memory only; a crash now would lose it,
    // so the persistence-free read reports it absent.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistFree, 3), (false, 0, 0));
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistFree, 4), (false, 0, 0));
    unstall(h);
}

#[test]
fn ld_traversals_charge_the_same_way() {
    let (mem, mut h) = stalled(SetImpl::Ld);
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistFree, 3), (false, 0, 0));
    // The traversal persists both pending insert links as it crosses them.
    assert_eq!(
        probe(&mem, &mut h, ContainsVariant::AsyncPersistAll, 9),
        (true, 4, 1)
    );
    // Which flips the persistence-free answer for key 3.
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistFree, 3), (true, 0, 0));
    assert_eq!(probe(&mem, &mut h, ContainsVariant::PersistAll, 3), (true, 0, 0));
    unstall(h);
}

#[test]
fn probes_do_not_bill_the_update_class() {
    let (mem, mut h) = stalled(SetImpl::Pd);
    let before = mem.stats().update;
    probe(&mem, &mut h, ContainsVariant::PersistAll, 9);
    let after = mem.stats().update;
    assert_eq!(before.flushes, after.flushes);
    assert_eq!(before.fences, after.fences);
    unstall(h);
}

#[test]
fn step_until_reports_a_completed_op() {
    let mem = Arc::new(SimPmem::new(SimConfig::default(), 1, StartOffsets::default()));
    let set = Arc::new(PdSet::build_durable(
        mem.clone(),
        ContainsVariant::PersistFree,
        &[(1, 10)],
    ));
    let mut h = SimHarness::new(mem, Some(set), None);
    h.assign(0, OpDesc::contains(1)).unwrap();
    let err = h
        .step_until(0, |e| e.kind == EventKind::Flush, 100)
        .unwrap_err();
    assert!(matches!(err, HarnessError::OpCompleted));
    h.finish();
}

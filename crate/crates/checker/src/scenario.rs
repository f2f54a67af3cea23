//! Scripted schedules with known psync and persistence outcomes.

use std::collections::BTreeSet;
use std::sync::Arc;

use nvset_core::audit::AuditContext;
use nvset_core::list::{ConcurrentSet, ContainsVariant, PdSet, SetImpl};
use nvset_core::recovery::recover_pd;
use nvset_core::substrate::harness::{OpDesc, SimHarness};
use nvset_core::substrate::{
    redundancy_from_events, Event, EventKind, OpClass, PsyncStats, SimConfig, SimPmem,
    StartOffsets, NIL,
};
use nvset_core::taglink;
use nvset_core::Pmem;

use crate::history::History;
use crate::lin::Verdict;
use crate::sle::check_sle;

fn step_past_fence(h: &mut SimHarness, w: usize) {
    for _ in 0..10_000 {
        let rep = h.step(w).expect("scenario step");
        assert!(rep.completed.is_none(), "op finished before its fence");
        if rep.events.iter().any(|e| e.kind == EventKind::Fence) {
            return;
        }
    }
    panic!("no fence within the step budget");
}

fn run_worker(h: &mut SimHarness, w: usize) -> Option<bool> {
    for _ in 0..10_000 {
        if !h.is_busy(w) {
            return None;
        }
        let rep = h.step(w).expect("scenario step");
        if let Some(done) = rep.completed {
            return Some(done.result);
        }
    }
    panic!("worker did not finish within the step budget");
}

#[derive(Clone, Debug)]
pub struct RedundantHelpingReport {
    pub n: usize,
    /// Redundant fences recomputed from the event log.
    pub redundant_psyncs: usize,
    /// Redundant fences per the online flags, for cross-checking.
    pub online_redundant: usize,
    pub events: Vec<Event>,
}

/// A schedule on which n concurrent inserts produce exactly n-1 redundant
/// psyncs. One winner installs its link and persists it, stalling right
/// after its fence with the durable bit still clear. Every other worker
/// then walks over that link, is obliged to persist it again, and stalls
/// after its own (redundant) fence. Released, all complete normally and
/// nothing else they do re-fences a clean cell.
pub fn redundant_helping(n: usize) -> RedundantHelpingReport {
    assert!(n >= 1, "need at least one worker");
    let mem = Arc::new(SimPmem::new(
        SimConfig::default(),
        n,
        StartOffsets::default(),
    ));
    let set = Arc::new(PdSet::new(mem.clone(), ContainsVariant::PersistAll));
    let ctx = AuditContext {
        impl_kind: SetImpl::Pd,
        head: set.head(),
        tail: set.tail(),
    };
    let set_dyn: Arc<dyn ConcurrentSet> = set;
    let mut h = SimHarness::new(mem.clone(), Some(set_dyn), Some(ctx));

    h.assign(0, OpDesc::insert(100, 100)).unwrap();
    step_past_fence(&mut h, 0);
    for w in 1..n {
        h.assign(w, OpDesc::insert(100 + w as i64, w as u64)).unwrap();
        step_past_fence(&mut h, w);
    }
    for w in 1..n {
        assert_eq!(run_worker(&mut h, w), Some(true));
    }
    assert_eq!(run_worker(&mut h, 0), Some(true));
    h.finish();

    let events = mem.events();
    let rescan = redundancy_from_events(&events);
    let online = events
        .iter()
        .filter(|e| e.kind == EventKind::Fence && e.redundant == Some(true))
        .count();
    RedundantHelpingReport {
        n,
        redundant_psyncs: rescan.redundant_fences.len(),
        online_redundant: online,
        events,
    }
}

#[derive(Clone, Debug)]
pub struct VolatileProbeReport {
    pub probe_result: bool,
    pub post_result: bool,
    pub verdict: Verdict,
    /// Pre-crash counters; the probe runs in the search class.
    pub stats: PsyncStats,
    pub events: Vec<Event>,
}

/// The failing half of the persistence-free dichotomy: a search that
/// answers from memory words no one has persisted. An insert stalls right
/// after installing its link, before any flush. A raw walk over the
/// volatile links, logged as a contains with zero flushes and fences,
/// reports the key present. The crash then discards the link, recovery
/// cannot see it, and a post-crash contains reports it absent, so no
/// strict completion explains both answers.
pub fn volatile_probe_violation() -> VolatileProbeReport {
    let key = 5i64;
    let mem = Arc::new(SimPmem::new(
        SimConfig::default(),
        2,
        StartOffsets::default(),
    ));
    let set = Arc::new(PdSet::new(mem.clone(), ContainsVariant::PersistFree));
    let head = set.head();
    mem.push_meta(serde_json::json!({
        "impl": "pd",
        "variant": "pf",
        "scenario": "volatile_probe_violation",
    }));
    let ctx = AuditContext {
        impl_kind: SetImpl::Pd,
        head,
        tail: set.tail(),
    };
    let set_dyn: Arc<dyn ConcurrentSet> = set;
    let mut h = SimHarness::new(mem.clone(), Some(set_dyn), Some(ctx));

    // Stall the insert as soon as its link is installed: the effect
    // annotation follows the successful dwcas, and no flush has run yet.
    h.assign(0, OpDesc::insert(key, 41)).unwrap();
    let mut installed = false;
    for _ in 0..10_000 {
        h.step(0).expect("scenario step");
        installed = mem.events().iter().any(|e| {
            e.kind == EventKind::Note && e.note.as_deref() == Some("volatile_effect")
        });
        if installed {
            break;
        }
    }
    assert!(installed, "insert never installed its link");

    // A bare volatile walk, logged as a search-class contains. It flushes
    // and fences nothing, so its answer owes nothing to the image.
    let probe_out = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let probe_flag = probe_out.clone();
    h.assign_raw(1, move |mem, w| {
        let op = mem.reserve_op_id();
        mem.begin_op(w, op, "contains", key, OpClass::Search);
        let mut cur = head;
        let mut found = false;
        loop {
            let pair = mem.read(w, cur);
            let next = taglink::unmark(pair.next);
            if next == NIL {
                break;
            }
            let k = mem.key_of(next);
            if k >= key {
                found = k == key && !taglink::is_marked(mem.read(w, next).next);
                break;
            }
            cur = next;
        }
        probe_flag.store(found, std::sync::atomic::Ordering::SeqCst);
        mem.end_op(w, op, found);
    })
    .unwrap();
    while h.is_busy(1) {
        h.step(1).expect("probe step");
    }
    let probe_result = probe_out.load(std::sync::atomic::Ordering::SeqCst);

    let stats = mem.stats();
    let (image, _in_flight) = h.crash();
    let offsets = mem.end_offsets();

    let mem2 = Arc::new(SimPmem::new(SimConfig::default(), 1, offsets));
    let set2 = recover_pd(mem2.clone(), &image, ContainsVariant::PersistFree)
        .expect("recovery");
    let ctx2 = AuditContext {
        impl_kind: SetImpl::Pd,
        head: set2.head(),
        tail: set2.tail(),
    };
    let set2_dyn: Arc<dyn ConcurrentSet> = Arc::new(set2);
    let mut h2 = SimHarness::new(mem2.clone(), Some(set2_dyn), Some(ctx2));
    h2.assign(0, OpDesc::contains(key)).unwrap();
    let post_result = run_worker(&mut h2, 0).expect("post-crash contains");
    h2.finish();

    let mut events = mem.events();
    events.extend(mem2.events());
    let history = History::from_events(&events).expect("well-formed history");
    let verdict = check_sle(&history, &BTreeSet::new());
    VolatileProbeReport {
        probe_result,
        post_result,
        verdict,
        stats,
        events,
    }
}

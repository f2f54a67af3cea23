//! Simulated persistent memory with deterministic step scheduling.
//!
//! Every substrate call made by a worker is one atomic step, executed only
//! when the driver grants it through a single turnstile. Each cell keeps a
//! volatile value and an optional persistent value; explicit flushes become
//! pending entries that commit at the issuing worker's next fence, at a
//! driver-injected early commit, or never (lost on crash). A driver-injected
//! background flush commits a cell's current value immediately.

use std::collections::HashMap;
use std::panic;
use std::sync::{Condvar, Mutex, Once};

use super::log::{Event, EventKind};
use super::{
    index_to_word, Annotation, ClassCounters, DwcasOutcome, OpClass, Pmem, PsyncStats, Word,
    WordPair, WorkerId, NIL,
};
use crate::recovery::{ImageCell, PersistentImage};
use crate::taglink;

/// When a pending explicit flush captures the value it will commit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CommitMode {
    /// The value present when the fence commits the flush.
    AtFence,
    /// The value present when the flush was issued.
    AtFlush,
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub commit_mode: CommitMode,
    /// Panic on a dwcas that rewrites a marked link with anything other
    /// than its own durable-bit image.
    pub validate_transitions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            commit_mode: CommitMode::AtFence,
            validate_transitions: true,
        }
    }
}

/// Numbering bases so a post-crash substrate continues the pre-crash run's
/// sequence, operation, cell, and worker-label spaces.
#[derive(Clone, Copy, Default, Debug)]
pub struct StartOffsets {
    pub seq: u64,
    pub op: u64,
    pub cell: u64,
    pub worker_label: usize,
}

/// Panic payload used to unwind workers at a crash. Filtered from the panic
/// hook so crashes stay quiet.
pub struct CrashSignal;

fn install_crash_hook() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        let prev = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if info.payload().downcast_ref::<CrashSignal>().is_some() {
                return;
            }
            prev(info);
        }));
    });
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Phase {
    Idle,
    Dispatched,
    AtGate,
    Granted,
    Running,
    Exited,
}

#[derive(Clone, Copy, Debug)]
struct SimCell {
    key: i64,
    value: u64,
    volatile: WordPair,
    persistent: Option<WordPair>,
    /// Last next value written with the durable bit set (allocation included).
    last_durable_next: Word,
    /// Flushed since the last destructive write; drives redundancy detection.
    flushed_clean: bool,
}

#[derive(Clone, Copy, Debug)]
struct PendingFlush {
    idx: usize,
    flush_seq: u64,
    snapshot: WordPair,
}

#[derive(Clone, Copy, Debug)]
struct CurOp {
    op_id: u64,
    class: OpClass,
}

/// Point-in-time view of one cell, for auditing.
#[derive(Clone, Copy, Debug)]
pub struct CellSnapshot {
    pub word: Word,
    pub key: i64,
    pub value: u64,
    pub volatile: WordPair,
    pub persistent: Option<WordPair>,
    pub last_durable_next: Word,
}

/// Independent re-derivation of redundancy from the event log.
#[derive(Clone, Debug, Default)]
pub struct RedundancyReport {
    pub redundant_flushes: Vec<u64>,
    pub redundant_fences: Vec<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("worker {0} is not at a gate")]
    NotAtGate(WorkerId),
    #[error("no pending flush with seq {0}")]
    UnknownPendingFlush(u64),
    #[error("substrate already crashed")]
    Crashed,
}

struct Inner {
    cells: Vec<SimCell>,
    pending: Vec<Vec<PendingFlush>>,
    log: Vec<Event>,
    stats: PsyncStats,
    fence_seen: bool,
    nonred_flush_since_fence: bool,
    cur_op: Vec<Option<CurOp>>,
    last_rmw_seq: Vec<Option<u64>>,
    /// (cell, non-durable next value) -> op whose durable-bit dwcas on that
    /// link is the op's persist effect.
    persist_reg: HashMap<(Word, Word), u64>,
    /// Delete-flagged victim -> removing op; credits the eventual unlink.
    unlink_owner: HashMap<Word, u64>,
    phases: Vec<Phase>,
    next_seq: u64,
    next_op: u64,
    crashed: bool,
    steps: u64,
}

impl Inner {
    fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn class_of(&self, w: WorkerId) -> OpClass {
        self.cur_op[w].map(|c| c.class).unwrap_or(OpClass::Setup)
    }
}

pub struct SimPmem {
    cfg: SimConfig,
    offsets: StartOffsets,
    workers: usize,
    inner: Mutex<Inner>,
    cv: Condvar,
}

impl SimPmem {
    pub fn new(cfg: SimConfig, workers: usize, offsets: StartOffsets) -> Self {
        install_crash_hook();
        SimPmem {
            cfg,
            offsets,
            workers,
            inner: Mutex::new(Inner {
                cells: Vec::new(),
                pending: vec![Vec::new(); workers],
                log: Vec::new(),
                stats: PsyncStats::default(),
                fence_seen: false,
                nonred_flush_since_fence: false,
                cur_op: vec![None; workers],
                last_rmw_seq: vec![None; workers],
                persist_reg: HashMap::new(),
                unlink_owner: HashMap::new(),
                phases: vec![Phase::Idle; workers],
                next_seq: offsets.seq,
                next_op: offsets.op,
                crashed: false,
                steps: 0,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn label(&self, w: WorkerId) -> usize {
        self.offsets.worker_label + w
    }

    fn cell_idx(&self, g: &Inner, word: Word) -> usize {
        let gi = super::word_to_index(word);
        assert!(
            gi >= self.offsets.cell && gi - self.offsets.cell < g.cells.len() as u64,
            "unknown cell {word:#x}"
        );
        (gi - self.offsets.cell) as usize
    }

    fn word_of(&self, idx: usize) -> Word {
        index_to_word(self.offsets.cell + idx as u64)
    }

    /// Worker side: park at the gate, run `f` as one atomic step once granted.
    fn gate_step<R>(&self, w: WorkerId, f: impl FnOnce(&mut Inner) -> R) -> R {
        let mut g = self.inner.lock().unwrap();
        if g.crashed {
            drop(g);
            panic::panic_any(CrashSignal);
        }
        debug_assert_eq!(g.phases[w], Phase::Running, "gate outside a running job");
        g.phases[w] = Phase::AtGate;
        self.cv.notify_all();
        loop {
            if g.crashed {
                drop(g);
                panic::panic_any(CrashSignal);
            }
            if g.phases[w] == Phase::Granted {
                break;
            }
            g = self.cv.wait(g).unwrap();
        }
        g.steps += 1;
        let r = f(&mut g);
        g.phases[w] = Phase::Running;
        self.cv.notify_all();
        r
    }

    // Job lifecycle, called by the harness worker loop.

    pub(crate) fn mark_dispatched(&self, w: WorkerId) {
        let mut g = self.inner.lock().unwrap();
        debug_assert_eq!(g.phases[w], Phase::Idle, "dispatch to busy worker");
        g.phases[w] = Phase::Dispatched;
        self.cv.notify_all();
    }

    pub(crate) fn mark_running(&self, w: WorkerId) {
        let mut g = self.inner.lock().unwrap();
        g.phases[w] = Phase::Running;
        self.cv.notify_all();
    }

    pub(crate) fn mark_idle(&self, w: WorkerId) {
        let mut g = self.inner.lock().unwrap();
        g.phases[w] = Phase::Idle;
        self.cv.notify_all();
    }

    pub(crate) fn mark_exited(&self, w: WorkerId) {
        let mut g = self.inner.lock().unwrap();
        g.phases[w] = Phase::Exited;
        self.cv.notify_all();
    }

    pub fn reserve_op_id(&self) -> u64 {
        let mut g = self.inner.lock().unwrap();
        let id = g.next_op;
        g.next_op += 1;
        id
    }

    /// Gated step logging the operation invocation.
    pub fn begin_op(&self, w: WorkerId, op_id: u64, op_kind: &str, key: i64, class: OpClass) {
        let label = self.label(w);
        let kind = op_kind.to_string();
        self.gate_step(w, |g| {
            g.cur_op[w] = Some(CurOp { op_id, class });
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Invoke);
            e.worker = Some(label);
            e.op = Some(op_id);
            e.op_kind = Some(kind);
            e.key = Some(key);
            e.class = Some(class_name(class).to_string());
            g.log.push(e);
        });
    }

    /// Gated step logging the operation response.
    pub fn end_op(&self, w: WorkerId, op_id: u64, result: bool) {
        let label = self.label(w);
        self.gate_step(w, |g| {
            g.cur_op[w] = None;
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Respond);
            e.worker = Some(label);
            e.op = Some(op_id);
            e.result = Some(result);
            g.log.push(e);
        });
    }

    // Driver side.

    /// Let worker `w` execute exactly one step; returns the records it
    /// appended. Blocks until the worker is parked at its next gate, idle,
    /// or exited.
    pub fn grant_step(&self, w: WorkerId) -> Result<Vec<Event>, SimError> {
        let mut g = self.inner.lock().unwrap();
        loop {
            match g.phases[w] {
                Phase::AtGate => break,
                Phase::Dispatched | Phase::Running | Phase::Granted => {
                    g = self.cv.wait(g).unwrap();
                }
                Phase::Idle | Phase::Exited => return Err(SimError::NotAtGate(w)),
            }
        }
        let log_start = g.log.len();
        g.phases[w] = Phase::Granted;
        self.cv.notify_all();
        while matches!(g.phases[w], Phase::Granted | Phase::Running) {
            g = self.cv.wait(g).unwrap();
        }
        Ok(g.log[log_start..].to_vec())
    }

    /// Wait until worker `w` is parked at a gate (true) or has no step to
    /// offer (false: idle or exited).
    pub fn wait_at_gate(&self, w: WorkerId) -> bool {
        let mut g = self.inner.lock().unwrap();
        loop {
            match g.phases[w] {
                Phase::AtGate => return true,
                Phase::Idle | Phase::Exited => return false,
                _ => g = self.cv.wait(g).unwrap(),
            }
        }
    }

    /// Driver-injected whole-cell background flush: commits the cell's
    /// current volatile value immediately, no fence involved.
    pub fn inject_bg_flush(&self, cell: Word) -> Result<(), SimError> {
        let mut g = self.inner.lock().unwrap();
        if g.crashed {
            return Err(SimError::Crashed);
        }
        let idx = self.cell_idx(&g, cell);
        let redundant = g.cells[idx].flushed_clean;
        g.cells[idx].flushed_clean = true;
        if !redundant {
            g.nonred_flush_since_fence = true;
        }
        let val = g.cells[idx].volatile;
        let seq = g.take_seq();
        let mut e = Event::base(seq, EventKind::BgFlush);
        e.cell = Some(cell);
        e.redundant = Some(redundant);
        g.log.push(e);
        g.cells[idx].persistent = Some(val);
        let cseq = g.take_seq();
        let mut c = Event::base(cseq, EventKind::Commit);
        c.cell = Some(cell);
        c.value_after = Some(val);
        c.cause = Some("bg_flush".to_string());
        c.cause_seq = Some(seq);
        g.log.push(c);
        Ok(())
    }

    /// Driver-injected adversarial commit of one pending explicit flush,
    /// identified by its flush event seq. Commits the cell's current value.
    pub fn inject_early_commit(&self, flush_seq: u64) -> Result<(), SimError> {
        let mut g = self.inner.lock().unwrap();
        if g.crashed {
            return Err(SimError::Crashed);
        }
        let mut found = None;
        'outer: for w in 0..self.workers {
            for (i, pf) in g.pending[w].iter().enumerate() {
                if pf.flush_seq == flush_seq {
                    found = Some((w, i));
                    break 'outer;
                }
            }
        }
        let (w, i) = found.ok_or(SimError::UnknownPendingFlush(flush_seq))?;
        let pf = g.pending[w].remove(i);
        let val = g.cells[pf.idx].volatile;
        let seq = g.take_seq();
        let mut e = Event::base(seq, EventKind::EarlyCommit);
        e.flush_seq = Some(flush_seq);
        e.cell = Some(self.word_of(pf.idx));
        g.log.push(e);
        g.cells[pf.idx].persistent = Some(val);
        let cseq = g.take_seq();
        let mut c = Event::base(cseq, EventKind::Commit);
        c.cell = Some(self.word_of(pf.idx));
        c.value_after = Some(val);
        c.cause = Some("early_commit".to_string());
        c.cause_seq = Some(seq);
        c.flush_seq = Some(flush_seq);
        g.log.push(c);
        Ok(())
    }

    /// Full-system crash: pending flushes are lost, every worker unwinds at
    /// its next gate, and the surviving persistent image is returned.
    pub fn crash(&self) -> PersistentImage {
        let mut g = self.inner.lock().unwrap();
        assert!(!g.crashed, "double crash");
        g.crashed = true;
        let seq = g.take_seq();
        let e = Event::base(seq, EventKind::Crash);
        g.log.push(e);
        self.cv.notify_all();
        while g
            .phases
            .iter()
            .any(|p| matches!(p, Phase::Dispatched | Phase::AtGate | Phase::Granted | Phase::Running))
        {
            g = self.cv.wait(g).unwrap();
        }
        for p in g.pending.iter_mut() {
            p.clear();
        }
        self.image_locked(&g)
    }

    fn image_locked(&self, g: &Inner) -> PersistentImage {
        let mut img = PersistentImage::default();
        for (i, c) in g.cells.iter().enumerate() {
            if let Some(pair) = c.persistent {
                img.cells.insert(
                    self.word_of(i),
                    ImageCell {
                        pair,
                        key: c.key,
                        value: c.value,
                    },
                );
            }
        }
        img
    }

    /// The persistent image as of now, without crashing.
    pub fn persistent_image_now(&self) -> PersistentImage {
        let g = self.inner.lock().unwrap();
        self.image_locked(&g)
    }

    pub fn snapshot_cells(&self) -> Vec<CellSnapshot> {
        let g = self.inner.lock().unwrap();
        g.cells
            .iter()
            .enumerate()
            .map(|(i, c)| CellSnapshot {
                word: self.word_of(i),
                key: c.key,
                value: c.value,
                volatile: c.volatile,
                persistent: c.persistent,
                last_durable_next: c.last_durable_next,
            })
            .collect()
    }

    pub fn events(&self) -> Vec<Event> {
        self.inner.lock().unwrap().log.clone()
    }

    pub fn events_len(&self) -> usize {
        self.inner.lock().unwrap().log.len()
    }

    pub fn push_meta(&self, meta: serde_json::Value) {
        let mut g = self.inner.lock().unwrap();
        let seq = g.take_seq();
        let mut e = Event::base(seq, EventKind::Meta);
        e.meta = Some(meta);
        g.log.push(e);
    }

    pub fn steps(&self) -> u64 {
        self.inner.lock().unwrap().steps
    }

    pub fn is_crashed(&self) -> bool {
        self.inner.lock().unwrap().crashed
    }

    /// Numbering bases a successor substrate should continue from.
    pub fn end_offsets(&self) -> StartOffsets {
        let g = self.inner.lock().unwrap();
        StartOffsets {
            seq: g.next_seq,
            op: g.next_op,
            cell: self.offsets.cell + g.cells.len() as u64,
            worker_label: self.offsets.worker_label + self.workers,
        }
    }

    /// Independent redundancy re-derivation from the log; ignores the online
    /// flags recorded on the events.
    pub fn redundancy_report(&self) -> RedundancyReport {
        let g = self.inner.lock().unwrap();
        redundancy_from_events(&g.log)
    }
}

/// Recompute flush and fence redundancy by scanning event records.
pub fn redundancy_from_events(log: &[Event]) -> RedundancyReport {
    let mut flushed_clean: HashMap<Word, bool> = HashMap::new();
    let mut fence_seen = false;
    let mut nonred = false;
    let mut out = RedundancyReport::default();
    for e in log {
        match e.kind {
            EventKind::Rmw => {
                if e.destructive == Some(true) {
                    flushed_clean.insert(e.cell.unwrap(), false);
                }
            }
            EventKind::Flush | EventKind::BgFlush => {
                let cell = e.cell.unwrap();
                let red = *flushed_clean.get(&cell).unwrap_or(&false);
                flushed_clean.insert(cell, true);
                if !red {
                    nonred = true;
                } else if e.kind == EventKind::Flush {
                    out.redundant_flushes.push(e.seq);
                }
            }
            EventKind::Fence => {
                if fence_seen && !nonred {
                    out.redundant_fences.push(e.seq);
                }
                fence_seen = true;
                nonred = false;
            }
            _ => {}
        }
    }
    out
}

fn class_name(c: OpClass) -> &'static str {
    match c {
        OpClass::Search => "search",
        OpClass::Update => "update",
        OpClass::Setup => "setup",
    }
}

impl Pmem for SimPmem {
    fn alloc(&self, w: WorkerId, key: i64, value: u64, init: WordPair) -> Word {
        let label = self.label(w);
        self.gate_step(w, |g| {
            let idx = g.cells.len();
            let word = index_to_word(self.offsets.cell + idx as u64);
            g.cells.push(SimCell {
                key,
                value,
                volatile: init,
                persistent: None,
                last_durable_next: if taglink::is_durable(init.next) {
                    init.next
                } else {
                    NIL
                },
                flushed_clean: false,
            });
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Alloc);
            e.worker = Some(label);
            e.cell = Some(word);
            e.value_after = Some(init);
            e.key = Some(key);
            e.value = Some(value);
            e.durable = Some(false);
            g.log.push(e);
            word
        })
    }

    fn alloc_init(&self, key: i64, value: u64, init: WordPair) -> Word {
        let mut g = self.inner.lock().unwrap();
        assert!(!g.crashed, "alloc_init on crashed substrate");
        let idx = g.cells.len();
        let word = index_to_word(self.offsets.cell + idx as u64);
        g.cells.push(SimCell {
            key,
            value,
            volatile: init,
            persistent: Some(init),
            last_durable_next: if taglink::is_durable(init.next) {
                init.next
            } else {
                NIL
            },
            flushed_clean: false,
        });
        let seq = g.take_seq();
        let mut e = Event::base(seq, EventKind::Alloc);
        e.cell = Some(word);
        e.value_after = Some(init);
        e.key = Some(key);
        e.value = Some(value);
        e.durable = Some(true);
        g.log.push(e);
        word
    }

    fn read(&self, w: WorkerId, node: Word) -> WordPair {
        let label = self.label(w);
        self.gate_step(w, |g| {
            let idx = self.cell_idx(g, node);
            let pair = g.cells[idx].volatile;
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Read);
            e.worker = Some(label);
            e.cell = Some(node);
            e.value_after = Some(pair);
            g.log.push(e);
            pair
        })
    }

    fn dwcas(
        &self,
        w: WorkerId,
        node: Word,
        expected: WordPair,
        desired: WordPair,
    ) -> DwcasOutcome {
        let label = self.label(w);
        let validate = self.cfg.validate_transitions;
        self.gate_step(w, |g| {
            let idx = self.cell_idx(g, node);
            let prior = g.cells[idx].volatile;
            let success = prior == expected;
            let destructive = success && desired != prior;
            if success {
                if validate && taglink::is_marked(prior.next) {
                    let bit_set_only = desired.next == taglink::mark_durable(prior.next)
                        && desired.old == prior.old;
                    assert!(
                        bit_set_only,
                        "marked link rewritten: cell {node:#x} {prior:?} -> {desired:?}"
                    );
                }
                g.cells[idx].volatile = desired;
                if destructive {
                    g.cells[idx].flushed_clean = false;
                }
                if taglink::is_durable(desired.next) {
                    g.cells[idx].last_durable_next = desired.next;
                }
            }
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Rmw);
            e.worker = Some(label);
            e.cell = Some(node);
            e.value_before = Some(prior);
            e.value_after = Some(if success { desired } else { prior });
            e.success = Some(success);
            e.destructive = Some(destructive);
            g.log.push(e);
            g.last_rmw_seq[w] = Some(seq);
            // A durable-bit-setting dwcas is the registered op's persist effect.
            if success
                && desired.old == NIL
                && !taglink::is_durable(prior.next)
                && desired.next == taglink::mark_durable(prior.next)
            {
                if let Some(op) = g.persist_reg.remove(&(node, prior.next)) {
                    let nseq = g.take_seq();
                    let mut n = Event::base(nseq, EventKind::Note);
                    n.worker = Some(label);
                    n.cell = Some(node);
                    n.op = Some(op);
                    n.note = Some("persist_effect".to_string());
                    n.ref_seq = Some(seq);
                    g.log.push(n);
                }
            }
            DwcasOutcome { prior, success }
        })
    }

    fn flush(&self, w: WorkerId, node: Word) {
        let label = self.label(w);
        self.gate_step(w, |g| {
            let idx = self.cell_idx(g, node);
            let redundant = g.cells[idx].flushed_clean;
            g.cells[idx].flushed_clean = true;
            if !redundant {
                g.nonred_flush_since_fence = true;
            }
            let class = g.class_of(w);
            let ctr: &mut ClassCounters = g.stats.class_mut(class);
            ctr.flushes += 1;
            if redundant {
                ctr.redundant_flushes += 1;
            }
            let snapshot = g.cells[idx].volatile;
            let seq = g.take_seq();
            let mut e = Event::base(seq, EventKind::Flush);
            e.worker = Some(label);
            e.cell = Some(node);
            e.redundant = Some(redundant);
            e.class = Some(class_name(class).to_string());
            g.log.push(e);
            g.pending[w].push(PendingFlush {
                idx,
                flush_seq: seq,
                snapshot,
            });
        })
    }

    fn fence(&self, w: WorkerId) {
        let label = self.label(w);
        let mode = self.cfg.commit_mode;
        self.gate_step(w, |g| {
            let redundant = g.fence_seen && !g.nonred_flush_since_fence;
            g.fence_seen = true;
            g.nonred_flush_since_fence = false;
            let class = g.class_of(w);
            let ctr = g.stats.class_mut(class);
            ctr.fences += 1;
            if redundant {
                ctr.redundant_fences += 1;
            }
            let fence_seq = g.take_seq();
            let mut e = Event::base(fence_seq, EventKind::Fence);
            e.worker = Some(label);
            e.redundant = Some(redundant);
            e.class = Some(class_name(class).to_string());
            g.log.push(e);
            let pend = std::mem::take(&mut g.pending[w]);
            for pf in pend {
                let val = match mode {
                    CommitMode::AtFence => g.cells[pf.idx].volatile,
                    CommitMode::AtFlush => pf.snapshot,
                };
                g.cells[pf.idx].persistent = Some(val);
                let cseq = g.take_seq();
                let mut c = Event::base(cseq, EventKind::Commit);
                c.worker = Some(label);
                c.cell = Some(self.word_of(pf.idx));
                c.value_after = Some(val);
                c.cause = Some("fence".to_string());
                c.cause_seq = Some(fence_seq);
                c.flush_seq = Some(pf.flush_seq);
                g.log.push(c);
            }
        })
    }

    fn key_of(&self, node: Word) -> i64 {
        let g = self.inner.lock().unwrap();
        let idx = self.cell_idx(&g, node);
        g.cells[idx].key
    }

    fn value_of(&self, node: Word) -> u64 {
        let g = self.inner.lock().unwrap();
        let idx = self.cell_idx(&g, node);
        g.cells[idx].value
    }

    /// Not a scheduled step: attaches effect notes to this worker's latest
    /// rmw. Safe because the worker has not reached its next gate yet, so no
    /// other step can interleave before the note lands.
    fn annotate(&self, w: WorkerId, note: Annotation) {
        let label = self.label(w);
        let mut g = self.inner.lock().unwrap();
        let ref_seq = g.last_rmw_seq[w];
        let cur = g.cur_op[w].map(|c| c.op_id);
        match note {
            Annotation::LinkInstalled { cell, next } | Annotation::Marked { cell, next } => {
                if let Some(op) = cur {
                    let seq = g.take_seq();
                    let mut e = Event::base(seq, EventKind::Note);
                    e.worker = Some(label);
                    e.cell = Some(cell);
                    e.op = Some(op);
                    e.note = Some("volatile_effect".to_string());
                    e.ref_seq = ref_seq;
                    g.log.push(e);
                    g.persist_reg.insert((cell, next), op);
                }
            }
            Annotation::Dflagged { victim } => {
                if let Some(op) = cur {
                    g.unlink_owner.insert(victim, op);
                    let seq = g.take_seq();
                    let mut e = Event::base(seq, EventKind::Note);
                    e.worker = Some(label);
                    e.victim = Some(victim);
                    e.op = Some(op);
                    e.note = Some("dflagged".to_string());
                    e.ref_seq = ref_seq;
                    g.log.push(e);
                }
            }
            Annotation::Unlinked { cell, next, victim } => {
                let owner = g.unlink_owner.remove(&victim);
                let seq = g.take_seq();
                let mut e = Event::base(seq, EventKind::Note);
                e.worker = Some(label);
                e.cell = Some(cell);
                e.victim = Some(victim);
                e.ref_seq = ref_seq;
                if let Some(op) = owner {
                    e.op = Some(op);
                    e.note = Some("volatile_effect".to_string());
                    g.persist_reg.insert((cell, next), op);
                } else {
                    e.note = Some("unlink".to_string());
                }
                g.log.push(e);
            }
        }
    }

    fn stats(&self) -> PsyncStats {
        self.inner.lock().unwrap().stats
    }
}

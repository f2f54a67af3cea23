//! Persistence substrate: word pairs, the pluggable memory trait, psync
//! accounting, and the simulated and native implementations.
//!
//! Cells are whole nodes. Only the link pair of a cell is mutable after
//! publication, and it is read and written only as an atomic pair. A flush
//! is asynchronous and per cell; a fence commits the issuing worker's
//! pending flushes; a psync is a flush followed by a fence and is counted
//! by fences.

mod log;
mod native;
mod schedule;
mod sim;

pub mod harness;

pub use log::{read_jsonl, render_pair, render_word, write_jsonl, Event, EventKind, LogError};
pub use native::NativePmem;
pub use schedule::{parse_schedule, Directive, ScheduleError};
pub use sim::{
    redundancy_from_events, CellSnapshot, CommitMode, CrashSignal, RedundancyReport, SimConfig,
    SimError, SimPmem, StartOffsets,
};

use serde::{Deserialize, Serialize};

/// Machine word used for link fields. Node references keep bits 0-3 free.
pub type Word = u64;

/// Null reference. Tag queries on NIL are all false.
pub const NIL: Word = 0;

pub type WorkerId = usize;

/// The two link words of a node, read and written only as an atomic pair.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct WordPair {
    pub next: Word,
    pub old: Word,
}

impl WordPair {
    pub const fn new(next: Word, old: Word) -> Self {
        Self { next, old }
    }
}

/// Result of a double-width compare-and-swap: the prior pair and whether it matched.
#[derive(Clone, Copy, Debug)]
pub struct DwcasOutcome {
    pub prior: WordPair,
    pub success: bool,
}

/// Operation class used to attribute flush and fence counters.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum OpClass {
    Search,
    Update,
    /// Construction, prefill, and recovery work outside any timed operation.
    Setup,
}

/// Instrumentation notes emitted by list code right after a successful dwcas.
/// The simulated substrate turns them into effect annotations on the log;
/// the native substrate ignores them.
#[derive(Clone, Copy, Debug)]
pub enum Annotation {
    /// A successful insert installed `next` into `cell`.
    LinkInstalled { cell: Word, next: Word },
    /// A remove delete-flagged `victim` (the unlink, by whoever performs it,
    /// will belong to that remove).
    Dflagged { victim: Word },
    /// A successful unlink of `victim` out of `cell`, installing `next`.
    Unlinked { cell: Word, next: Word, victim: Word },
    /// A successful logical-delete mark installing `next` into `cell`.
    Marked { cell: Word, next: Word },
}

/// Per-class flush/fence counters.
#[derive(Clone, Copy, Default, Debug, Serialize, Deserialize)]
pub struct ClassCounters {
    pub flushes: u64,
    pub fences: u64,
    pub redundant_flushes: u64,
    pub redundant_fences: u64,
}

impl ClassCounters {
    fn add(&mut self, other: &ClassCounters) {
        self.flushes += other.flushes;
        self.fences += other.fences;
        self.redundant_flushes += other.redundant_flushes;
        self.redundant_fences += other.redundant_fences;
    }
}

/// Flush/fence counters partitioned by operation class.
#[derive(Clone, Copy, Default, Debug, Serialize, Deserialize)]
pub struct PsyncStats {
    pub search: ClassCounters,
    pub update: ClassCounters,
    pub setup: ClassCounters,
}

impl PsyncStats {
    pub fn class(&self, c: OpClass) -> &ClassCounters {
        match c {
            OpClass::Search => &self.search,
            OpClass::Update => &self.update,
            OpClass::Setup => &self.setup,
        }
    }

    pub fn class_mut(&mut self, c: OpClass) -> &mut ClassCounters {
        match c {
            OpClass::Search => &mut self.search,
            OpClass::Update => &mut self.update,
            OpClass::Setup => &mut self.setup,
        }
    }

    pub fn total(&self) -> ClassCounters {
        let mut t = ClassCounters::default();
        t.add(&self.search);
        t.add(&self.update);
        t.add(&self.setup);
        t
    }
}

/// Pluggable persistent-memory substrate. Both lists are written once over
/// this trait; the simulated implementation schedules every call below as
/// one atomic step, the native one maps them onto hardware atomics.
pub trait Pmem: Send + Sync + 'static {
    /// Allocate a node cell. Its initial pair is volatile only; the cell
    /// reaches the persistent image through flush commits.
    fn alloc(&self, w: WorkerId, key: i64, value: u64, init: WordPair) -> Word;

    /// Allocate a cell that is persistent at birth. Construction and
    /// recovery only; never part of a timed operation.
    fn alloc_init(&self, key: i64, value: u64, init: WordPair) -> Word;

    fn read(&self, w: WorkerId, node: Word) -> WordPair;

    fn dwcas(&self, w: WorkerId, node: Word, expected: WordPair, desired: WordPair)
        -> DwcasOutcome;

    /// Non-blocking per-cell flush; takes effect at a later commit.
    fn flush(&self, w: WorkerId, node: Word);

    /// Commits the issuing worker's pending flushes.
    fn fence(&self, w: WorkerId);

    /// Immutable after allocation; not a scheduled step.
    fn key_of(&self, node: Word) -> i64;

    /// Immutable after allocation; not a scheduled step.
    fn value_of(&self, node: Word) -> u64;

    fn annotate(&self, _w: WorkerId, _note: Annotation) {}

    fn stats(&self) -> PsyncStats;
}

/// Node words are synthetic 64-byte-spaced addresses so tag bits 0-3 are free.
pub(crate) const CELL_SHIFT: u32 = 6;

#[inline]
pub(crate) fn index_to_word(idx: u64) -> Word {
    (idx + 1) << CELL_SHIFT
}

#[inline]
pub(crate) fn word_to_index(w: Word) -> u64 {
    debug_assert_eq!(w & 0xF, 0, "cell word carries tag bits");
    debug_assert_ne!(w, NIL, "NIL dereference");
    (w >> CELL_SHIFT) - 1
}

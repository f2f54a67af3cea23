//! Native substrate backed by hardware double-width compare-and-swap.
//!
//! Nodes live in per-worker bump arenas of 64-byte cells. Flush and fence
//! are modeled: they update the psync accounting (with the same redundancy
//! rules as the simulator, approximated under races) and issue an ordering
//! fence, but durability is not observable here; crash injection is the
//! simulator's job.

use std::alloc::{alloc_zeroed, handle_alloc_error, Layout};
use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::OnceLock;

use portable_atomic::AtomicU128;

use super::{
    index_to_word, word_to_index, ClassCounters, DwcasOutcome, OpClass, Pmem, PsyncStats, Word,
    WordPair, WorkerId,
};

const CHUNK: usize = 4096;
const MAX_CHUNKS: usize = 1 << 14;
const SLOT_BITS: u32 = 32;

#[repr(C, align(64))]
struct NativeCell {
    pair: AtomicU128,
    key: UnsafeCell<i64>,
    value: UnsafeCell<u64>,
    flushed_clean: AtomicBool,
}

// key/value are written once before the cell is published through a
// release-ordered dwcas on its parent link and never written again.
unsafe impl Sync for NativeCell {}

const _: () = assert!(std::mem::size_of::<NativeCell>() == 64);
const _: () = assert!(std::mem::align_of::<NativeCell>() == 64);

type Chunk = [NativeCell; CHUNK];

fn new_chunk() -> Box<Chunk> {
    let layout = Layout::new::<Chunk>();
    unsafe {
        let p = alloc_zeroed(layout) as *mut Chunk;
        if p.is_null() {
            handle_alloc_error(layout);
        }
        Box::from_raw(p)
    }
}

struct Arena {
    chunks: Vec<OnceLock<Box<Chunk>>>,
    len: AtomicUsize,
}

impl Arena {
    fn new() -> Self {
        let mut chunks = Vec::with_capacity(MAX_CHUNKS);
        chunks.resize_with(MAX_CHUNKS, OnceLock::new);
        Arena {
            chunks,
            len: AtomicUsize::new(0),
        }
    }
}

#[inline]
fn pack(p: WordPair) -> u128 {
    (p.next as u128) | ((p.old as u128) << 64)
}

#[inline]
fn unpack(v: u128) -> WordPair {
    WordPair {
        next: v as u64,
        old: (v >> 64) as u64,
    }
}

struct ClassAtomics {
    flushes: AtomicU64,
    fences: AtomicU64,
    redundant_flushes: AtomicU64,
    redundant_fences: AtomicU64,
}

impl ClassAtomics {
    fn new() -> Self {
        ClassAtomics {
            flushes: AtomicU64::new(0),
            fences: AtomicU64::new(0),
            redundant_flushes: AtomicU64::new(0),
            redundant_fences: AtomicU64::new(0),
        }
    }

    fn snapshot(&self) -> ClassCounters {
        ClassCounters {
            flushes: self.flushes.load(Ordering::Relaxed),
            fences: self.fences.load(Ordering::Relaxed),
            redundant_flushes: self.redundant_flushes.load(Ordering::Relaxed),
            redundant_fences: self.redundant_fences.load(Ordering::Relaxed),
        }
    }
}

#[repr(align(64))]
struct PaddedU8(AtomicU8);

pub struct NativePmem {
    arenas: Vec<Arena>,
    setup_arena: usize,
    cur_class: Vec<PaddedU8>,
    classes: [ClassAtomics; 3],
    fence_seen: AtomicBool,
    nonred_flush_since_fence: AtomicBool,
}

fn class_idx(c: OpClass) -> usize {
    match c {
        OpClass::Search => 0,
        OpClass::Update => 1,
        OpClass::Setup => 2,
    }
}

impl NativePmem {
    /// None when the platform offers no lock-free 128-bit atomics.
    pub fn try_new(workers: usize) -> Option<Self> {
        if !AtomicU128::is_lock_free() {
            return None;
        }
        let mut arenas = Vec::with_capacity(workers + 1);
        arenas.resize_with(workers + 1, Arena::new);
        let mut cur_class = Vec::with_capacity(workers);
        cur_class.resize_with(workers, || PaddedU8(AtomicU8::new(class_idx(OpClass::Setup) as u8)));
        Some(NativePmem {
            arenas,
            setup_arena: workers,
            cur_class,
            classes: [ClassAtomics::new(), ClassAtomics::new(), ClassAtomics::new()],
            fence_seen: AtomicBool::new(false),
            nonred_flush_since_fence: AtomicBool::new(false),
        })
    }

    /// Attribute this worker's subsequent flushes and fences to `class`.
    pub fn set_class(&self, w: WorkerId, class: OpClass) {
        self.cur_class[w].0.store(class_idx(class) as u8, Ordering::Relaxed);
    }

    fn class_of(&self, w: WorkerId) -> usize {
        self.cur_class[w].0.load(Ordering::Relaxed) as usize
    }

    fn arena_alloc(&self, a: usize, key: i64, value: u64, init: WordPair) -> Word {
        let arena = &self.arenas[a];
        let slot = arena.len.fetch_add(1, Ordering::Relaxed);
        let (ci, off) = (slot / CHUNK, slot % CHUNK);
        assert!(ci < MAX_CHUNKS, "arena exhausted");
        let chunk = arena.chunks[ci].get_or_init(new_chunk);
        let cell = &chunk[off];
        unsafe {
            *cell.key.get() = key;
            *cell.value.get() = value;
        }
        cell.pair.store(pack(init), Ordering::Relaxed);
        cell.flushed_clean.store(false, Ordering::Relaxed);
        index_to_word(((a as u64) << SLOT_BITS) | slot as u64)
    }

    fn get(&self, node: Word) -> &NativeCell {
        let gi = word_to_index(node);
        let a = (gi >> SLOT_BITS) as usize;
        let slot = (gi & ((1 << SLOT_BITS) - 1)) as usize;
        let chunk = self.arenas[a].chunks[slot / CHUNK]
            .get()
            .expect("unallocated cell");
        &chunk[slot % CHUNK]
    }
}

impl Pmem for NativePmem {
    fn alloc(&self, w: WorkerId, key: i64, value: u64, init: WordPair) -> Word {
        self.arena_alloc(w, key, value, init)
    }

    fn alloc_init(&self, key: i64, value: u64, init: WordPair) -> Word {
        self.arena_alloc(self.setup_arena, key, value, init)
    }

    fn read(&self, _w: WorkerId, node: Word) -> WordPair {
        unpack(self.get(node).pair.load(Ordering::SeqCst))
    }

    fn dwcas(
        &self,
        _w: WorkerId,
        node: Word,
        expected: WordPair,
        desired: WordPair,
    ) -> DwcasOutcome {
        let cell = self.get(node);
        match cell.pair.compare_exchange(
            pack(expected),
            pack(desired),
            Ordering::SeqCst,
            Ordering::SeqCst,
        ) {
            Ok(prev) => {
                if desired != expected {
                    cell.flushed_clean.store(false, Ordering::Release);
                }
                DwcasOutcome {
                    prior: unpack(prev),
                    success: true,
                }
            }
            Err(prev) => DwcasOutcome {
                prior: unpack(prev),
                success: false,
            },
        }
    }

    fn flush(&self, w: WorkerId, node: Word) {
        let cell = self.get(node);
        let was_clean = cell.flushed_clean.swap(true, Ordering::AcqRel);
        let c = &self.classes[self.class_of(w)];
        c.flushes.fetch_add(1, Ordering::Relaxed);
        if was_clean {
            c.redundant_flushes.fetch_add(1, Ordering::Relaxed);
        } else {
            self.nonred_flush_since_fence.store(true, Ordering::Release);
        }
    }

    fn fence(&self, w: WorkerId) {
        std::sync::atomic::fence(Ordering::SeqCst);
        let c = &self.classes[self.class_of(w)];
        c.fences.fetch_add(1, Ordering::Relaxed);
        let had_nonred = self.nonred_flush_since_fence.swap(false, Ordering::AcqRel);
        let seen = self.fence_seen.swap(true, Ordering::AcqRel);
        if seen && !had_nonred {
            c.redundant_fences.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn key_of(&self, node: Word) -> i64 {
        unsafe { *self.get(node).key.get() }
    }

    fn value_of(&self, node: Word) -> u64 {
        unsafe { *self.get(node).value.get() }
    }

    fn stats(&self) -> PsyncStats {
        PsyncStats {
            search: self.classes[0].snapshot(),
            update: self.classes[1].snapshot(),
            setup: self.classes[2].snapshot(),
        }
    }
}

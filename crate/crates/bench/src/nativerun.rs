//! Wall-clock benchmark on the native double-width-CAS substrate.

use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nvset_core::list::{ConcurrentSet, ContainsVariant, LdSet, PdSet, SetImpl};
use nvset_core::substrate::harness::OpKind;
use nvset_core::substrate::{ClassCounters, NativePmem, PsyncStats};
use nvset_core::Pmem;

use crate::workload::Workload;

pub struct NativeSpec<'a> {
    pub impl_kind: SetImpl,
    pub variant: ContainsVariant,
    pub threads: usize,
    pub workload: &'a Workload,
    pub duration: f64,
    pub seed: u64,
}

pub struct NativeOutcome {
    pub elapsed: f64,
    pub total_ops: u64,
    pub search_ops: u64,
    pub successful_updates: u64,
    /// Counter deltas across the measurement window (prefill and warmup
    /// excluded; tails of in-window ops included).
    pub stats: PsyncStats,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    total: u64,
    search: u64,
    succ_updates: u64,
}

const WARMUP: Duration = Duration::from_millis(100);

fn sub(b: &ClassCounters, a: &ClassCounters) -> ClassCounters {
    ClassCounters {
        flushes: b.flushes - a.flushes,
        fences: b.fences - a.fences,
        redundant_flushes: b.redundant_flushes - a.redundant_flushes,
        redundant_fences: b.redundant_fences - a.redundant_fences,
    }
}

pub fn run_native(spec: NativeSpec) -> anyhow::Result<NativeOutcome> {
    if spec.duration <= 0.0 {
        bail!("duration must be positive, got {}", spec.duration);
    }
    let Some(mem) = NativePmem::try_new(spec.threads) else {
        bail!("native mode is unsupported here: double-width CAS is not lock-free");
    };
    let mem = Arc::new(mem);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut workload = spec.workload.clone();
    let items = workload.prefill(&mut rng).context("prefill")?;
    let set: Arc<dyn ConcurrentSet> = match spec.impl_kind {
        SetImpl::Pd => Arc::new(PdSet::build_durable(mem.clone(), spec.variant, &items)),
        SetImpl::Ld => Arc::new(LdSet::build_durable(mem.clone(), spec.variant, &items)),
    };

    // 0 = warmup, 1 = measure, 2 = stop.
    let phase = Arc::new(AtomicU8::new(0));
    let mut handles = Vec::with_capacity(spec.threads);
    for w in 0..spec.threads {
        let mem = mem.clone();
        let set = set.clone();
        let phase = phase.clone();
        let wl = workload.clone();
        let mut trng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ (w as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        handles.push(std::thread::spawn(move || {
            let mut tally = Tally::default();
            loop {
                let p = phase.load(Ordering::Acquire);
                if p == 2 {
                    break;
                }
                let counted = p == 1;
                let (kind, key, value) = wl.sample_op(&mut trng);
                mem.set_class(w, kind.class());
                let ok = match kind {
                    OpKind::Insert => set.insert(w, key, value),
                    OpKind::Remove => set.remove(w, key),
                    OpKind::Contains => set.contains(w, key),
                };
                if counted {
                    tally.total += 1;
                    match kind {
                        OpKind::Contains => tally.search += 1,
                        OpKind::Insert | OpKind::Remove => {
                            if ok {
                                tally.succ_updates += 1;
                            }
                        }
                    }
                }
            }
            tally
        }));
    }

    std::thread::sleep(WARMUP);
    let start = mem.stats();
    let t0 = Instant::now();
    phase.store(1, Ordering::Release);
    std::thread::sleep(Duration::from_secs_f64(spec.duration));
    phase.store(2, Ordering::Release);
    let elapsed = t0.elapsed().as_secs_f64();

    let mut total = Tally::default();
    for h in handles {
        let t = h.join().map_err(|_| anyhow::anyhow!("worker thread panicked"))?;
        total.total += t.total;
        total.search += t.search;
        total.succ_updates += t.succ_updates;
    }
    let end = mem.stats();
    Ok(NativeOutcome {
        elapsed,
        total_ops: total.total,
        search_ops: total.search,
        successful_updates: total.succ_updates,
        stats: PsyncStats {
            search: sub(&end.search, &start.search),
            update: sub(&end.update, &start.update),
            setup: sub(&end.setup, &start.setup),
        },
    })
}

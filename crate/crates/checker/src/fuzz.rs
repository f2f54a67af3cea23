//! Randomized sim runs: mixed ops, flush/commit injection, crash,
//! recovery, and a short post-crash tail, all under the structural
//! auditor. The caller turns the merged event log into a history and
//! judges it; this module only drives the schedule.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvset_core::audit::AuditContext;
use nvset_core::list::{ConcurrentSet, ContainsVariant, LdSet, PdSet, SetImpl};
use nvset_core::recovery::{recover_ld, recover_pd, PersistentImage, RecoveryError};
use nvset_core::substrate::harness::{HarnessError, OpDesc, SimHarness};
use nvset_core::substrate::{
    Event, EventKind, PsyncStats, SimConfig, SimPmem, StartOffsets,
};
use nvset_core::taglink;
use nvset_core::Pmem;

#[derive(Clone, Copy, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub force_impl: Option<SetImpl>,
    pub force_variant: Option<ContainsVariant>,
    /// Whether the random variant pool includes persistence-free contains.
    pub allow_pf: bool,
    pub crash_probability: f64,
    pub audit: bool,
    /// Operations dispatched before the crash point.
    pub max_ops: usize,
    /// Operations dispatched after recovery.
    pub post_ops: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            force_impl: None,
            force_variant: None,
            allow_pf: true,
            crash_probability: 0.8,
            audit: true,
            max_ops: 10,
            post_ops: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FuzzOutcome {
    pub seed: u64,
    pub impl_kind: SetImpl,
    pub variant: ContainsVariant,
    pub workers: usize,
    pub key_range: i64,
    pub init: BTreeSet<i64>,
    pub crashed: bool,
    pub image: Option<PersistentImage>,
    /// Keys readable from the recovered list's links, by direct walk.
    pub recovered: Option<BTreeSet<i64>>,
    /// Psync counters per epoch: pre-crash, then post-crash if any.
    pub stats: Vec<PsyncStats>,
    pub steps: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, thiserror::Error)]
pub enum FuzzError {
    #[error("{source}")]
    Harness {
        #[source]
        source: HarnessError,
        /// Log up to the failure, for reconstructing the schedule.
        events: Vec<Event>,
    },
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error("run exceeded the step budget")]
    StepBudget,
}

fn random_op(rng: &mut ChaCha8Rng, key_range: i64) -> OpDesc {
    let key = rng.gen_range(0..key_range);
    match rng.gen_range(0..3) {
        0 => OpDesc::insert(key, rng.gen_range(1..1_000)),
        1 => OpDesc::remove(key),
        _ => OpDesc::contains(key),
    }
}

fn build_set(
    mem: &Arc<SimPmem>,
    impl_kind: SetImpl,
    variant: ContainsVariant,
    items: &[(i64, u64)],
) -> Arc<dyn ConcurrentSet> {
    match impl_kind {
        SetImpl::Pd => Arc::new(PdSet::build_durable(mem.clone(), variant, items)),
        SetImpl::Ld => Arc::new(LdSet::build_durable(mem.clone(), variant, items)),
    }
}

/// Reads the recovered set straight off the links, bypassing the ops.
fn walk_keys(mem: &SimPmem, set: &Arc<dyn ConcurrentSet>) -> BTreeSet<i64> {
    let cells = mem.snapshot_cells();
    let mut by_word = std::collections::HashMap::new();
    for c in &cells {
        by_word.insert(c.word, c);
    }
    let mut out = BTreeSet::new();
    let mut cur = set.head();
    loop {
        let Some(c) = by_word.get(&cur) else { break };
        if c.key > i64::MIN && c.key < i64::MAX {
            out.insert(c.key);
        }
        let next = taglink::unmark(c.volatile.next);
        if next == nvset_core::NIL {
            break;
        }
        cur = next;
    }
    out
}

pub fn run_fuzz(cfg: FuzzConfig) -> Result<FuzzOutcome, FuzzError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let workers = rng.gen_range(2..=4);
    let key_range = rng.gen_range(2..=8i64);
    let impl_kind = cfg.force_impl.unwrap_or_else(|| {
        if rng.gen_bool(0.5) {
            SetImpl::Pd
        } else {
            SetImpl::Ld
        }
    });
    let variant = cfg.force_variant.unwrap_or_else(|| {
        let mut pool = vec![
            ContainsVariant::PersistAll,
            ContainsVariant::AsyncPersistAll,
            ContainsVariant::PersistLast,
        ];
        if cfg.allow_pf {
            pool.push(ContainsVariant::PersistFree);
        }
        pool[rng.gen_range(0..pool.len())]
    });
    let mut items = Vec::new();
    for k in 0..key_range {
        if rng.gen_bool(0.5) {
            items.push((k, rng.gen_range(1..1_000)));
        }
    }
    let init: BTreeSet<i64> = items.iter().map(|&(k, _)| k).collect();

    let mem = Arc::new(SimPmem::new(
        SimConfig::default(),
        workers,
        StartOffsets::default(),
    ));
    let set = build_set(&mem, impl_kind, variant, &items);
    mem.push_meta(serde_json::json!({
        "impl": impl_kind.name(),
        "variant": variant.name(),
        "seed": cfg.seed,
        "init": init.iter().collect::<Vec<_>>(),
    }));
    let ctx = AuditContext {
        impl_kind,
        head: set.head(),
        tail: set.tail(),
    };
    let mut h = SimHarness::new(
        mem.clone(),
        Some(set.clone()),
        cfg.audit.then_some(ctx),
    );

    let crash_at = if rng.gen_bool(cfg.crash_probability) {
        Some(rng.gen_range(5..=120u64))
    } else {
        None
    };
    let mut dispatched = 0usize;
    let mut steps = 0u64;
    let mut outstanding: Vec<u64> = Vec::new();
    let mut crash_now = false;
    loop {
        if let Some(c) = crash_at {
            if steps >= c {
                crash_now = true;
                break;
            }
        }
        let busy = h.busy_workers();
        if busy.is_empty() && dispatched >= cfg.max_ops {
            break;
        }
        let idle: Vec<usize> = (0..workers).filter(|&w| !h.is_busy(w)).collect();
        if dispatched < cfg.max_ops
            && !idle.is_empty()
            && (busy.is_empty() || rng.gen_bool(0.35))
        {
            let w = idle[rng.gen_range(0..idle.len())];
            h.assign(w, random_op(&mut rng, key_range))
                .map_err(|source| FuzzError::Harness {
                    source,
                    events: mem.events(),
                })?;
            dispatched += 1;
            continue;
        }
        if rng.gen_bool(0.05) {
            let cells = mem.snapshot_cells();
            let c = cells[rng.gen_range(0..cells.len())].word;
            let _ = mem.inject_bg_flush(c);
        }
        if !outstanding.is_empty() && rng.gen_bool(0.10) {
            let i = rng.gen_range(0..outstanding.len());
            let fs = outstanding.swap_remove(i);
            let _ = mem.inject_early_commit(fs);
        }
        let w = busy[rng.gen_range(0..busy.len())];
        let rep = h.step(w).map_err(|source| FuzzError::Harness {
            source,
            events: mem.events(),
        })?;
        steps += 1;
        for e in &rep.events {
            match e.kind {
                EventKind::Flush => outstanding.push(e.seq),
                EventKind::Commit => {
                    if let Some(fs) = e.flush_seq {
                        outstanding.retain(|&x| x != fs);
                    }
                }
                _ => {}
            }
        }
        if steps > 10_000 {
            return Err(FuzzError::StepBudget);
        }
    }

    let mut stats = vec![mem.stats()];
    if !crash_now {
        h.finish();
        return Ok(FuzzOutcome {
            seed: cfg.seed,
            impl_kind,
            variant,
            workers,
            key_range,
            init,
            crashed: false,
            image: None,
            recovered: None,
            stats,
            steps,
            events: mem.events(),
        });
    }

    let (image, _in_flight) = h.crash();
    let offsets = mem.end_offsets();
    let mem2 = Arc::new(SimPmem::new(SimConfig::default(), 1, offsets));
    let set2: Arc<dyn ConcurrentSet> = match impl_kind {
        SetImpl::Pd => Arc::new(recover_pd(mem2.clone(), &image, variant)?),
        SetImpl::Ld => Arc::new(recover_ld(mem2.clone(), &image, variant)?),
    };
    let recovered = walk_keys(&mem2, &set2);
    let ctx2 = AuditContext {
        impl_kind,
        head: set2.head(),
        tail: set2.tail(),
    };
    let mut h2 = SimHarness::new(
        mem2.clone(),
        Some(set2.clone()),
        cfg.audit.then_some(ctx2),
    );
    let merged = |mem: &Arc<SimPmem>, mem2: &Arc<SimPmem>| {
        let mut ev = mem.events();
        ev.extend(mem2.events());
        ev
    };
    let post_n = rng.gen_range(0..=cfg.post_ops);
    for _ in 0..post_n {
        h2.assign(0, random_op(&mut rng, key_range))
            .map_err(|source| FuzzError::Harness {
                source,
                events: merged(&mem, &mem2),
            })?;
        while h2.is_busy(0) {
            h2.step(0).map_err(|source| FuzzError::Harness {
                source,
                events: merged(&mem, &mem2),
            })?;
            steps += 1;
            if steps > 20_000 {
                return Err(FuzzError::StepBudget);
            }
        }
    }
    h2.finish();
    stats.push(mem2.stats());

    let mut events = mem.events();
    events.extend(mem2.events());
    Ok(FuzzOutcome {
        seed: cfg.seed,
        impl_kind,
        variant,
        workers,
        key_range,
        init,
        crashed: true,
        image: Some(image),
        recovered: Some(recovered),
        stats,
        steps,
        events,
    })
}

//! Seeded or scripted benchmark runs on the simulated substrate.

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvset_core::audit::AuditContext;
use nvset_core::list::{ConcurrentSet, ContainsVariant, LdSet, PdSet, SetImpl};
use nvset_core::recovery::{persistent_abstract_set, PersistentImage};
use nvset_core::substrate::harness::{CompletedOp, OpDesc, OpKind, SimHarness};
use nvset_core::substrate::{
    redundancy_from_events, Directive, Event, PsyncStats, SimConfig, SimPmem, StartOffsets,
};
use nvset_core::Pmem;

use crate::workload::Workload;

pub struct SimSpec<'a> {
    pub impl_kind: SetImpl,
    pub variant: ContainsVariant,
    pub threads: usize,
    pub workload: &'a Workload,
    /// Operations to dispatch when no schedule is given.
    pub ops: usize,
    pub seed: u64,
    pub schedule: Option<&'a [Directive]>,
    pub audit: bool,
}

pub struct SimOutcome {
    pub steps: u64,
    pub completed_ops: usize,
    pub search_ops: u64,
    pub successful_updates: u64,
    pub stats: PsyncStats,
    /// Redundant fences recomputed from the event log.
    pub redundant_psyncs: u64,
    pub crashed: bool,
    pub recovered_set_size: Option<usize>,
    pub init: BTreeSet<i64>,
    pub events: Vec<Event>,
    pub image: PersistentImage,
}

fn desc_from(kind: OpKind, key: i64, value: u64) -> OpDesc {
    match kind {
        OpKind::Insert => OpDesc::insert(key, value),
        OpKind::Remove => OpDesc::remove(key),
        OpKind::Contains => OpDesc::contains(key),
    }
}

pub fn run_sim(spec: SimSpec) -> anyhow::Result<SimOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut workload = spec.workload.clone();
    let items = workload.prefill(&mut rng)?;
    let init: BTreeSet<i64> = items.iter().map(|&(k, _)| k).collect();

    let mem = Arc::new(SimPmem::new(
        SimConfig::default(),
        spec.threads,
        StartOffsets::default(),
    ));
    let set: Arc<dyn ConcurrentSet> = match spec.impl_kind {
        SetImpl::Pd => Arc::new(PdSet::build_durable(mem.clone(), spec.variant, &items)),
        SetImpl::Ld => Arc::new(LdSet::build_durable(mem.clone(), spec.variant, &items)),
    };
    mem.push_meta(serde_json::json!({
        "impl": spec.impl_kind.name(),
        "variant": spec.variant.name(),
        "workers": spec.threads,
        "seed": spec.seed,
        "pf": spec.variant == ContainsVariant::PersistFree,
        "init": init.iter().collect::<Vec<_>>(),
    }));
    let ctx = AuditContext {
        impl_kind: spec.impl_kind,
        head: set.head(),
        tail: set.tail(),
    };
    let mut h = SimHarness::new(mem.clone(), Some(set), spec.audit.then_some(ctx));

    let sample = |rng: &mut ChaCha8Rng| {
        let (kind, key, value) = workload.sample_op(rng);
        desc_from(kind, key, value)
    };

    let mut crashed = false;
    if let Some(directives) = spec.schedule {
        for d in directives {
            match *d {
                Directive::Step(w) => {
                    if w >= spec.threads {
                        bail!("schedule steps worker {w} but the run has {} threads", spec.threads);
                    }
                    if !h.is_busy(w) {
                        h.assign(w, sample(&mut rng))?;
                    }
                    h.step(w).context("scheduled step")?;
                }
                Directive::BgFlush(cell) => mem.inject_bg_flush(cell)?,
                Directive::EarlyCommit(fs) => mem.inject_early_commit(fs)?,
                Directive::Crash => {
                    crashed = true;
                    break;
                }
            }
        }
        if !crashed {
            h.run_round_robin(1_000_000).context("schedule drain")?;
        }
    } else {
        let step_budget = 100_000 + spec.ops as u64 * 5_000;
        let mut dispatched = 0usize;
        loop {
            if dispatched < spec.ops {
                for w in 0..spec.threads {
                    if dispatched < spec.ops && !h.is_busy(w) {
                        h.assign(w, sample(&mut rng))?;
                        dispatched += 1;
                    }
                }
            }
            let busy = h.busy_workers();
            if busy.is_empty() {
                break;
            }
            let w = busy[rng.gen_range(0..busy.len())];
            h.step(w).context("benchmark step")?;
            if mem.steps() > step_budget {
                bail!("run exceeded the step budget ({step_budget})");
            }
        }
    }

    let steps = mem.steps();
    let (completions, image): (Vec<CompletedOp>, PersistentImage) = if crashed {
        let done = h.completed().to_vec();
        let (img, _pending) = h.crash();
        (done, img)
    } else {
        (h.finish(), mem.persistent_image_now())
    };
    let recovered_set_size = if crashed {
        Some(persistent_abstract_set(&image, spec.impl_kind)?.len())
    } else {
        None
    };

    let mut search_ops = 0u64;
    let mut successful_updates = 0u64;
    for c in &completions {
        match c.desc.kind {
            OpKind::Contains => search_ops += 1,
            OpKind::Insert | OpKind::Remove => {
                if c.result {
                    successful_updates += 1;
                }
            }
        }
    }

    let events = mem.events();
    let redundant_psyncs = redundancy_from_events(&events).redundant_fences.len() as u64;
    Ok(SimOutcome {
        steps,
        completed_ops: completions.len(),
        search_ops,
        successful_updates,
        stats: mem.stats(),
        redundant_psyncs,
        crashed,
        recovered_set_size,
        init,
        events,
        image,
    })
}

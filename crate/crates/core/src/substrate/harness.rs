//! Driver harness: worker threads executing set operations over the
//! simulator, advanced one step at a time by the calling test or tool.
//!
//! Workers park at every substrate call; `step` lets one of them run exactly
//! one such call. A crash unwinds every worker at its next gate. With an
//! audit context attached, structural invariants are re-checked after every
//! step.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::sim::{CrashSignal, SimError, SimPmem};
use super::{Event, EventKind, OpClass, WorkerId};
use crate::audit::{self, AuditContext, AuditViolation, PendingOps};
use crate::list::{ConcurrentSet, ContainsVariant};
use crate::recovery::PersistentImage;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpKind {
    Insert,
    Remove,
    Contains,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Insert => "insert",
            OpKind::Remove => "remove",
            OpKind::Contains => "contains",
        }
    }

    pub fn class(self) -> OpClass {
        match self {
            OpKind::Insert | OpKind::Remove => OpClass::Update,
            OpKind::Contains => OpClass::Search,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OpDesc {
    pub kind: OpKind,
    pub key: i64,
    pub value: u64,
    /// Contains only: override the list's configured variant.
    pub variant: Option<ContainsVariant>,
}

impl OpDesc {
    pub fn insert(key: i64, value: u64) -> Self {
        OpDesc {
            kind: OpKind::Insert,
            key,
            value,
            variant: None,
        }
    }

    pub fn remove(key: i64) -> Self {
        OpDesc {
            kind: OpKind::Remove,
            key,
            value: 0,
            variant: None,
        }
    }

    pub fn contains(key: i64) -> Self {
        OpDesc {
            kind: OpKind::Contains,
            key,
            value: 0,
            variant: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InFlight {
    pub op_id: u64,
    pub desc: OpDesc,
}

#[derive(Clone, Copy, Debug)]
pub struct CompletedOp {
    pub op_id: u64,
    pub desc: OpDesc,
    pub result: bool,
}

enum Job {
    Op { op_id: u64, desc: OpDesc },
    Raw(Box<dyn FnOnce(&Arc<SimPmem>, WorkerId) + Send>),
}

#[derive(Clone, Copy, Debug)]
enum Busy {
    No,
    Op(InFlight),
    Raw,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audit(#[from] AuditViolation),
    #[error("worker {0} already busy")]
    WorkerBusy(WorkerId),
    #[error("worker {0} has no job")]
    WorkerIdle(WorkerId),
    #[error("step limit exceeded")]
    StepLimit,
    #[error("operation completed before the predicate matched")]
    OpCompleted,
    #[error("harness has no set attached")]
    NoSet,
}

pub struct StepReport {
    pub events: Vec<Event>,
    pub completed: Option<CompletedOp>,
}

pub struct SimHarness {
    pmem: Arc<SimPmem>,
    set: Option<Arc<dyn ConcurrentSet>>,
    workers: usize,
    txs: Vec<Option<Sender<Job>>>,
    joins: Vec<Option<JoinHandle<()>>>,
    busy: Vec<Busy>,
    completed: Vec<CompletedOp>,
    audit: Option<AuditContext>,
}

fn worker_main(
    pmem: Arc<SimPmem>,
    set: Option<Arc<dyn ConcurrentSet>>,
    w: WorkerId,
    rx: std::sync::mpsc::Receiver<Job>,
) {
    while let Ok(job) = rx.recv() {
        pmem.mark_running(w);
        let out = catch_unwind(AssertUnwindSafe(|| match job {
            Job::Op { op_id, desc } => {
                let set = set.as_ref().expect("op job without a set");
                pmem.begin_op(w, op_id, desc.kind.name(), desc.key, desc.kind.class());
                let r = match desc.kind {
                    OpKind::Insert => set.insert(w, desc.key, desc.value),
                    OpKind::Remove => set.remove(w, desc.key),
                    OpKind::Contains => match desc.variant {
                        Some(v) => set.contains_with(w, v, desc.key),
                        None => set.contains(w, desc.key),
                    },
                };
                pmem.end_op(w, op_id, r);
            }
            Job::Raw(f) => f(&pmem, w),
        }));
        match out {
            Ok(()) => pmem.mark_idle(w),
            Err(payload) => {
                pmem.mark_exited(w);
                if payload.downcast_ref::<CrashSignal>().is_none() {
                    resume_unwind(payload);
                }
                return;
            }
        }
    }
    pmem.mark_exited(w);
}

impl SimHarness {
    pub fn new(
        pmem: Arc<SimPmem>,
        set: Option<Arc<dyn ConcurrentSet>>,
        audit: Option<AuditContext>,
    ) -> Self {
        let workers = pmem.workers();
        let mut txs = Vec::with_capacity(workers);
        let mut joins = Vec::with_capacity(workers);
        for w in 0..workers {
            let (tx, rx) = channel();
            let pm = Arc::clone(&pmem);
            let st = set.clone();
            joins.push(Some(std::thread::spawn(move || worker_main(pm, st, w, rx))));
            txs.push(Some(tx));
        }
        SimHarness {
            pmem,
            set,
            workers,
            txs,
            joins,
            busy: vec![Busy::No; workers],
            completed: Vec::new(),
            audit,
        }
    }

    pub fn pmem(&self) -> &Arc<SimPmem> {
        &self.pmem
    }

    pub fn set(&self) -> Option<&Arc<dyn ConcurrentSet>> {
        self.set.as_ref()
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_busy(&self, w: WorkerId) -> bool {
        !matches!(self.busy[w], Busy::No)
    }

    pub fn busy_workers(&self) -> Vec<WorkerId> {
        (0..self.workers).filter(|&w| self.is_busy(w)).collect()
    }

    pub fn completed(&self) -> &[CompletedOp] {
        &self.completed
    }

    pub fn in_flight(&self, w: WorkerId) -> Option<InFlight> {
        match self.busy[w] {
            Busy::Op(f) => Some(f),
            _ => None,
        }
    }

    /// Hand worker `w` a set operation; it will park at its first step.
    pub fn assign(&mut self, w: WorkerId, desc: OpDesc) -> Result<u64, HarnessError> {
        if self.is_busy(w) {
            return Err(HarnessError::WorkerBusy(w));
        }
        if self.set.is_none() {
            return Err(HarnessError::NoSet);
        }
        let op_id = self.pmem.reserve_op_id();
        self.busy[w] = Busy::Op(InFlight { op_id, desc });
        self.pmem.mark_dispatched(w);
        self.txs[w]
            .as_ref()
            .expect("worker channel closed")
            .send(Job::Op { op_id, desc })
            .expect("worker thread gone");
        Ok(op_id)
    }

    /// Hand worker `w` an arbitrary closure over the raw substrate.
    pub fn assign_raw(
        &mut self,
        w: WorkerId,
        f: impl FnOnce(&Arc<SimPmem>, WorkerId) + Send + 'static,
    ) -> Result<(), HarnessError> {
        if self.is_busy(w) {
            return Err(HarnessError::WorkerBusy(w));
        }
        self.busy[w] = Busy::Raw;
        self.pmem.mark_dispatched(w);
        self.txs[w]
            .as_ref()
            .expect("worker channel closed")
            .send(Job::Raw(Box::new(f)))
            .expect("worker thread gone");
        Ok(())
    }

    /// Let worker `w` execute exactly one substrate step.
    pub fn step(&mut self, w: WorkerId) -> Result<StepReport, HarnessError> {
        if !self.is_busy(w) {
            return Err(HarnessError::WorkerIdle(w));
        }
        let events = self.pmem.grant_step(w)?;
        let mut completed = None;
        for e in &events {
            if e.kind == EventKind::Respond {
                if let Busy::Op(f) = self.busy[w] {
                    let done = CompletedOp {
                        op_id: f.op_id,
                        desc: f.desc,
                        result: e.result.unwrap_or(false),
                    };
                    self.completed.push(done);
                    completed = Some(done);
                    self.busy[w] = Busy::No;
                }
            }
        }
        if matches!(self.busy[w], Busy::Raw) && !self.pmem.wait_at_gate(w) {
            self.busy[w] = Busy::No;
        }
        if let Some(ctx) = &self.audit {
            let cells = self.pmem.snapshot_cells();
            let pending = self.pending_ops();
            audit::check_invariants(ctx, &cells, &pending)?;
        }
        Ok(StepReport { events, completed })
    }

    fn pending_ops(&self) -> PendingOps {
        let mut p = PendingOps::default();
        for b in &self.busy {
            if let Busy::Op(f) = b {
                match f.desc.kind {
                    OpKind::Insert => p.insert_keys.push(f.desc.key),
                    OpKind::Remove => p.remove_keys.push(f.desc.key),
                    OpKind::Contains => {}
                }
            }
        }
        p
    }

    /// Step `w` until a granted step contains an event matching `pred`.
    pub fn step_until(
        &mut self,
        w: WorkerId,
        mut pred: impl FnMut(&Event) -> bool,
        max_steps: usize,
    ) -> Result<Vec<Event>, HarnessError> {
        let mut seen = Vec::new();
        for _ in 0..max_steps {
            let rep = self.step(w)?;
            let hit = rep.events.iter().any(&mut pred);
            seen.extend(rep.events);
            if hit {
                return Ok(seen);
            }
            if rep.completed.is_some() {
                return Err(HarnessError::OpCompleted);
            }
        }
        Err(HarnessError::StepLimit)
    }

    /// Drive every busy worker round-robin until all are done.
    pub fn run_round_robin(&mut self, max_steps: usize) -> Result<u64, HarnessError> {
        let mut steps = 0u64;
        loop {
            let busy = self.busy_workers();
            if busy.is_empty() {
                return Ok(steps);
            }
            for w in busy {
                if self.is_busy(w) {
                    self.step(w)?;
                    steps += 1;
                    if steps as usize > max_steps {
                        return Err(HarnessError::StepLimit);
                    }
                }
            }
        }
    }

    /// Full-system crash. Returns the surviving image and the operations
    /// that were pending (no response) when it hit.
    pub fn crash(mut self) -> (PersistentImage, Vec<InFlight>) {
        let image = self.pmem.crash();
        let pending: Vec<InFlight> = self
            .busy
            .iter()
            .filter_map(|b| match b {
                Busy::Op(f) => Some(*f),
                _ => None,
            })
            .collect();
        self.shutdown();
        (image, pending)
    }

    /// Orderly end of the run; all workers must be done.
    pub fn finish(mut self) -> Vec<CompletedOp> {
        assert!(
            self.busy_workers().is_empty(),
            "finish with operations still in flight"
        );
        self.shutdown();
        std::mem::take(&mut self.completed)
    }

    fn shutdown(&mut self) {
        for tx in self.txs.iter_mut() {
            tx.take();
        }
        for j in self.joins.iter_mut() {
            if let Some(h) = j.take() {
                let _ = h.join();
            }
        }
    }
}

impl Drop for SimHarness {
    fn drop(&mut self) {
        if self.joins.iter().any(|j| j.is_some()) {
            if !self.pmem.is_crashed() && !self.busy_workers().is_empty() {
                // Unwind stuck workers so join cannot deadlock.
                let _ = self.pmem.crash();
            }
            self.shutdown();
        }
    }
}

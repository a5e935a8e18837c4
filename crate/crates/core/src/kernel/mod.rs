//! Discrete-event execution of NAND commands on channel and die resources.
//!
//! Each die owns a sensing latch and a cache register. A sense may start once
//! the latch is empty (and, without CACHE READ, once the cache register is
//! empty too); finished data moves to the cache register when it is free and
//! otherwise stays parked in the latch. Each channel has one data bus and one
//! ECC engine, both served first-come first-served.
//!
//! Reads are page jobs. Step 0 is the initial read; steps `1..` are retry
//! steps. Ready senses on a die are ordered by request arrival, then step,
//! then job, so retries of an older request overtake younger requests.
//! Each die holds one tPRE setting; a sense that needs a different setting
//! is preceded by a SET FEATURE, and an adaptive chain restores the default
//! once it completes.
//! Program and erase only run on a die with no outstanding reads and are
//! suspended as soon as a read targets the die.

mod queue;
mod retry;

use std::collections::{BTreeSet, HashMap, VecDeque};

pub use queue::EventQueue;
pub use retry::{CalibratedRetries, FixedRetries, RetryDraw, RetrySource};

use crate::error::{ConfigError, SimError};
use crate::policy::{PolicyKind, Recipe};
use crate::reliability::{OperatingCondition, RptTable};
use crate::timing::{Nanos, PageType, TimingParams, TpreReduction};
use crate::topology::{BlockMeta, PhysAddr, SsdConfig};
use crate::workload::{IoOp, IoRequest};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub geometry: SsdConfig,
    pub timing: TimingParams,
    /// PEC and retention of preconditioned data, and the run temperature.
    pub condition: OperatingCondition,
    pub activation_energy_ev: f64,
    /// Overlap a page's transfer with the next sense on the same die.
    pub cache_read: bool,
    /// Die time spent pausing a program or erase.
    pub suspend_overhead: Nanos,
    /// Vendor cap on retry steps; bounds speculative senses.
    pub max_retry_steps: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: SsdConfig::default(),
            timing: TimingParams::default(),
            condition: OperatingCondition::new(0, 0.0, 30.0),
            activation_energy_ev: crate::reliability::RetryCalibration::default().activation_energy_ev,
            cache_read: true,
            suspend_overhead: Nanos::ZERO,
            max_retry_steps: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestRecord {
    pub arrival: Nanos,
    pub completion: Nanos,
    pub op: IoOp,
    pub pages: u32,
}

impl RequestRecord {
    pub fn response(&self) -> Nanos {
        self.completion - self.arrival
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PageRead {
    /// Retry steps the page needs.
    pub raw_steps: u32,
    /// Retry steps the policy executes.
    pub executed_steps: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub events: u64,
    pub resets: u64,
    pub set_features: u64,
    pub rollbacks: u64,
    pub suspensions: u64,
    pub folded_lbas: u64,
    pub clamped_reads: u64,
    pub exhausted_reads: u64,
    pub outlier_reads: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    /// One record per workload request, in workload order.
    pub requests: Vec<RequestRecord>,
    pub page_reads: Vec<PageRead>,
    pub stats: SimStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival(usize),
    SenseDone { die: usize, gen: u64 },
    TransferDone { channel: usize },
    EccDone { channel: usize },
    DieOpDone { die: usize },
    PeDone { die: usize, gen: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Latch {
    Empty,
    Sensing { job: usize, step: u32 },
    Parked { job: usize, step: u32 },
}

#[derive(Clone, Copy, Debug)]
struct CacheSlot {
    job: usize,
    on_bus: bool,
}

#[derive(Clone, Copy, Debug)]
enum DieOp {
    /// SET FEATURE of the die's tPRE; `None` restores the default.
    SetTpre(Option<TpreReduction>),
    Reset,
    Suspend,
}

#[derive(Clone, Copy, Debug)]
struct PeState {
    job: usize,
    remaining: Nanos,
    /// `None` while suspended.
    started: Option<Nanos>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct ReadyKey {
    seq: u64,
    step: u32,
    job: usize,
}

#[derive(Debug)]
struct Die {
    channel: usize,
    latch: Latch,
    sense_gen: u64,
    cache: Option<CacheSlot>,
    op: Option<DieOp>,
    ops_queue: VecDeque<DieOp>,
    tpre: Option<TpreReduction>,
    ready: BTreeSet<ReadyKey>,
    outstanding_reads: usize,
    pe: Option<PeState>,
    pe_gen: u64,
    pe_queue: VecDeque<usize>,
}

#[derive(Debug, Default)]
struct Channel {
    bus: Option<(usize, usize, u32)>,
    bus_queue: VecDeque<(usize, usize, u32)>,
    ecc: Option<(usize, u32)>,
    ecc_queue: VecDeque<(usize, u32)>,
}

#[derive(Clone, Copy, Debug)]
struct ReadPlan {
    page: PageType,
    /// Step whose ECC decode succeeds.
    success: u32,
    /// Last step of a reduced-timing chain that is doomed to fail.
    outlier_end: Option<u32>,
    reduction: TpreReduction,
}

#[derive(Clone, Copy, Debug)]
enum Work {
    Read(ReadPlan),
    Program,
    Erase,
}

#[derive(Clone, Copy, Debug)]
struct Job {
    parent: usize,
    die: usize,
    seq: u64,
    work: Work,
    done: bool,
}

#[derive(Clone, Copy, Debug)]
struct Parent {
    remaining: u32,
    completion: Nanos,
}

/// One simulation run: a policy applied to a workload on a fresh device.
pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    policy: PolicyKind,
    recipe: Recipe,
    retries: &'a dyn RetrySource,
    rpt: &'a RptTable,
    blocks: HashMap<u64, BlockMeta>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        cfg: &'a SimConfig,
        policy: PolicyKind,
        retries: &'a dyn RetrySource,
        rpt: &'a RptTable,
    ) -> Result<Self, SimError> {
        cfg.geometry.validate()?;
        cfg.timing.validate()?;
        let recipe = policy.recipe();
        if recipe.pipelined && !cfg.cache_read {
            return Err(ConfigError::Invalid(format!("policy {policy} needs CACHE READ support")).into());
        }
        Ok(Simulation { cfg, policy, recipe, retries, rpt, blocks: HashMap::new() })
    }

    /// Pins the operating condition of the block holding `lba`.
    pub fn assign_condition(&mut self, lba: u64, cond: OperatingCondition) -> Result<(), SimError> {
        let addr = self.cfg.geometry.map_logical(lba)?;
        self.block_mut(&addr).assigned_condition = Some(cond);
        Ok(())
    }

    fn block_mut(&mut self, addr: &PhysAddr) -> &mut BlockMeta {
        let geo = &self.cfg.geometry;
        let (pec, ppb) = (self.cfg.condition.pec, geo.pages_per_block);
        self.blocks.entry(geo.block_index(addr)).or_insert_with(|| BlockMeta::preconditioned(pec, ppb))
    }

    pub fn run(self, workload: &[IoRequest]) -> Result<SimOutcome, SimError> {
        let geo = &self.cfg.geometry;
        let dies = (0..geo.dies())
            .map(|d| Die {
                channel: (d / geo.dies_per_channel) as usize,
                latch: Latch::Empty,
                sense_gen: 0,
                cache: None,
                op: None,
                ops_queue: VecDeque::new(),
                tpre: None,
                ready: BTreeSet::new(),
                outstanding_reads: 0,
                pe: None,
                pe_gen: 0,
                pe_queue: VecDeque::new(),
            })
            .collect();
        let engine = Engine {
            sim: self,
            dies,
            channels: (0..geo.channels).map(|_| Channel::default()).collect(),
            jobs: Vec::new(),
            parents: Vec::with_capacity(workload.len()),
            queue: EventQueue::default(),
            page_reads: Vec::new(),
            stats: SimStats::default(),
            now: Nanos::ZERO,
            pending: workload.len(),
        };
        engine.run(workload)
    }
}

struct Engine<'a> {
    sim: Simulation<'a>,
    dies: Vec<Die>,
    channels: Vec<Channel>,
    jobs: Vec<Job>,
    parents: Vec<Parent>,
    queue: EventQueue<Event>,
    page_reads: Vec<PageRead>,
    stats: SimStats,
    now: Nanos,
    pending: usize,
}

impl Engine<'_> {
    fn timing(&self) -> &TimingParams {
        &self.sim.cfg.timing
    }

    fn run(mut self, workload: &[IoRequest]) -> Result<SimOutcome, SimError> {
        for (i, r) in workload.iter().enumerate() {
            if i > 0 && r.arrival < workload[i - 1].arrival {
                return Err(SimError::Invariant(format!("request {i} arrives before its predecessor")));
            }
            self.queue.push(r.arrival, Event::Arrival(i));
            self.parents.push(Parent { remaining: 0, completion: r.arrival });
        }
        while let Some((t, ev)) = self.queue.pop() {
            self.now = t;
            self.stats.events += 1;
            self.handle(ev, workload)?;
        }
        if self.pending > 0 {
            return Err(SimError::Deadlock { time_ns: self.now.0, pending: self.pending });
        }
        if self.stats.folded_lbas > 0 {
            log::warn!("{} requests addressed beyond the device and were folded", self.stats.folded_lbas);
        }
        if self.stats.clamped_reads > 0 {
            log::warn!("{} reads fell outside the calibrated grid and were clamped", self.stats.clamped_reads);
        }
        let requests = workload
            .iter()
            .zip(&self.parents)
            .map(|(r, p)| RequestRecord {
                arrival: r.arrival,
                completion: p.completion,
                op: r.op,
                pages: r.page_count(self.sim.cfg.geometry.page_bytes) as u32,
            })
            .collect();
        Ok(SimOutcome { requests, page_reads: self.page_reads, stats: self.stats })
    }

    fn handle(&mut self, ev: Event, workload: &[IoRequest]) -> Result<(), SimError> {
        match ev {
            Event::Arrival(i) => self.arrive(i, &workload[i]),
            Event::SenseDone { die, gen } => {
                if gen == self.dies[die].sense_gen {
                    self.sense_done(die)?;
                }
                Ok(())
            }
            Event::TransferDone { channel } => self.transfer_done(channel),
            Event::EccDone { channel } => self.ecc_done(channel),
            Event::DieOpDone { die } => self.die_op_done(die),
            Event::PeDone { die, gen } => {
                if gen == self.dies[die].pe_gen {
                    self.pe_done(die)?;
                }
                Ok(())
            }
        }
    }

    fn arrive(&mut self, idx: usize, req: &IoRequest) -> Result<(), SimError> {
        let geo = self.sim.cfg.geometry.clone();
        let device_pages = geo.device_pages();
        let mut lba = req.lba;
        let pages = match req.op {
            IoOp::Erase => 1,
            _ => req.page_count(geo.page_bytes),
        };
        if lba + pages > device_pages {
            self.stats.folded_lbas += 1;
            lba %= device_pages;
        }
        let seq = idx as u64;
        self.parents[idx].remaining = pages as u32;
        let mut touched = Vec::new();
        for k in 0..pages {
            let addr = geo.map_logical((lba + k) % device_pages)?;
            let die = geo.die_index(&addr);
            let work = match req.op {
                IoOp::Read => Work::Read(self.plan_read(&addr)?),
                IoOp::Write => {
                    let now = self.now;
                    self.sim.block_mut(&addr).program(addr.page, now);
                    Work::Program
                }
                IoOp::Erase => {
                    self.sim.block_mut(&addr).erase();
                    Work::Erase
                }
            };
            let job = self.jobs.len();
            self.jobs.push(Job { parent: idx, die, seq, work, done: false });
            let d = &mut self.dies[die];
            match work {
                Work::Read(_) => {
                    d.outstanding_reads += 1;
                    d.ready.insert(ReadyKey { seq, step: 0, job });
                }
                Work::Program | Work::Erase => d.pe_queue.push_back(job),
            }
            touched.push(die);
        }
        touched.dedup();
        for die in touched {
            self.dispatch_die(die)?;
        }
        Ok(())
    }

    fn plan_read(&mut self, addr: &PhysAddr) -> Result<ReadPlan, SimError> {
        let cfg = self.sim.cfg;
        let now = self.now;
        let page_id = cfg.geometry.page_id(addr);
        let cond = self.sim.block_mut(addr).condition_of(addr, now, &cfg.condition, cfg.activation_energy_ev)?;
        let draw = self.sim.retries.draw(&cond, page_id);
        self.stats.clamped_reads += u64::from(draw.clamped);
        self.stats.exhausted_reads += u64::from(draw.exhausted);
        let steps = self.sim.policy.effective_steps(draw.steps);
        self.page_reads.push(PageRead { raw_steps: draw.steps, executed_steps: steps });
        let adaptive = self.sim.recipe.adaptive;
        let outlier = adaptive && draw.outlier && steps > 0;
        self.stats.outlier_reads += u64::from(outlier);
        let max = cfg.max_retry_steps;
        Ok(ReadPlan {
            page: addr.page_type(),
            success: if outlier { max + steps } else { steps },
            outlier_end: outlier.then_some(max),
            reduction: if adaptive { self.sim.rpt.lookup(&cond) } else { TpreReduction::NONE },
        })
    }

    fn read_plan(&self, job: usize) -> ReadPlan {
        match self.jobs[job].work {
            Work::Read(p) => p,
            _ => unreachable!("job {job} is not a read"),
        }
    }

    /// Last step a pipelined chain may sense speculatively after `step`.
    fn speculation_cap(&self, plan: &ReadPlan, step: u32) -> u32 {
        let max = self.sim.cfg.max_retry_steps;
        match plan.outlier_end {
            Some(end) if step <= end => end,
            Some(end) => end + max,
            None => max,
        }
    }

    fn dispatch_die(&mut self, die: usize) -> Result<(), SimError> {
        loop {
            let d = &self.dies[die];
            if d.op.is_some() {
                return Ok(());
            }
            if let Some(&op) = d.ops_queue.front() {
                if d.latch != Latch::Empty {
                    return Ok(());
                }
                self.dies[die].ops_queue.pop_front();
                if !matches!(op, DieOp::SetTpre(t) if t == self.dies[die].tpre) {
                    self.start_die_op(die, op);
                }
                continue;
            }
            if let Some(pe) = d.pe {
                if pe.started.is_some() {
                    if d.outstanding_reads > 0 {
                        self.suspend(die);
                        continue;
                    }
                    return Ok(());
                }
            }
            if d.latch != Latch::Empty {
                return Ok(());
            }
            match d.ready.first().copied() {
                Some(k) => {
                    if !self.sim.cfg.cache_read && d.cache.is_some() {
                        return Ok(());
                    }
                    let tpre = self.required_tpre(k.job, k.step);
                    if tpre != d.tpre {
                        self.start_die_op(die, DieOp::SetTpre(tpre));
                        continue;
                    }
                    self.dies[die].ready.remove(&k);
                    self.start_sense(die, k.job, k.step)?;
                }
                None => {
                    let idle = d.outstanding_reads == 0 && d.cache.is_none();
                    if idle && (d.pe.is_some() || !d.pe_queue.is_empty()) {
                        self.start_pe(die);
                    }
                    return Ok(());
                }
            }
        }
    }

    /// tPRE setting a sense of `step` must run under.
    fn required_tpre(&self, job: usize, step: u32) -> Option<TpreReduction> {
        let plan = self.read_plan(job);
        let fallback = plan.outlier_end.is_some_and(|end| step > end);
        (self.sim.recipe.adaptive && step > 0 && !fallback).then_some(plan.reduction)
    }

    fn start_sense(&mut self, die: usize, job: usize, step: u32) -> Result<(), SimError> {
        let plan = self.read_plan(job);
        let tpre = self.dies[die].tpre;
        if tpre != self.required_tpre(job, step) {
            return Err(SimError::Invariant(format!("die {die} senses job {job} step {step} under the wrong tPRE")));
        }
        let duration = match tpre {
            Some(r) => self.timing().reduced_sense_latency(plan.page, r),
            None => self.timing().sense_latency(plan.page),
        };
        let d = &mut self.dies[die];
        d.latch = Latch::Sensing { job, step };
        d.sense_gen += 1;
        let gen = d.sense_gen;
        self.queue.push(self.now + duration, Event::SenseDone { die, gen });
        Ok(())
    }

    fn sense_done(&mut self, die: usize) -> Result<(), SimError> {
        let Latch::Sensing { job, step } = self.dies[die].latch else {
            return Err(SimError::Invariant(format!("die {die} finished a sense it never started")));
        };
        if self.sim.recipe.pipelined && step > 0 {
            let plan = self.read_plan(job);
            if step < self.speculation_cap(&plan, step) {
                let seq = self.jobs[job].seq;
                self.dies[die].ready.insert(ReadyKey { seq, step: step + 1, job });
            }
        }
        self.dies[die].latch = Latch::Parked { job, step };
        self.unpark(die);
        self.dispatch_die(die)?;
        self.dispatch_channel(self.dies[die].channel);
        Ok(())
    }

    /// Moves parked latch data into a free cache register and queues its transfer.
    fn unpark(&mut self, die: usize) {
        let d = &mut self.dies[die];
        if let (Latch::Parked { job, step }, None) = (d.latch, d.cache) {
            d.latch = Latch::Empty;
            d.cache = Some(CacheSlot { job, on_bus: false });
            let ch = d.channel;
            self.channels[ch].bus_queue.push_back((die, job, step));
        }
    }

    fn dispatch_channel(&mut self, ch: usize) {
        let tdma = self.timing().tdma;
        let tecc = self.timing().tecc;
        let c = &mut self.channels[ch];
        if c.bus.is_none() {
            if let Some((die, job, step)) = c.bus_queue.pop_front() {
                c.bus = Some((die, job, step));
                if let Some(slot) = self.dies[die].cache.as_mut() {
                    slot.on_bus = true;
                }
                self.queue.push(self.now + tdma, Event::TransferDone { channel: ch });
            }
        }
        let c = &mut self.channels[ch];
        if c.ecc.is_none() {
            if let Some(item) = c.ecc_queue.pop_front() {
                c.ecc = Some(item);
                self.queue.push(self.now + tecc, Event::EccDone { channel: ch });
            }
        }
    }

    fn transfer_done(&mut self, ch: usize) -> Result<(), SimError> {
        let (die, job, step) = self.channels[ch].bus.take().expect("bus busy");
        self.dies[die].cache = None;
        if !self.jobs[job].done {
            self.channels[ch].ecc_queue.push_back((job, step));
        }
        self.unpark(die);
        self.dispatch_die(die)?;
        self.dispatch_channel(ch);
        Ok(())
    }

    fn ecc_done(&mut self, ch: usize) -> Result<(), SimError> {
        let (job, step) = self.channels[ch].ecc.take().expect("ecc busy");
        let die = self.jobs[job].die;
        if !self.jobs[job].done {
            let plan = self.read_plan(job);
            let seq = self.jobs[job].seq;
            if step == plan.success {
                self.finish_read(job)?;
            } else if step == 0 || plan.outlier_end == Some(step) || !self.sim.recipe.pipelined {
                self.dies[die].ready.insert(ReadyKey { seq, step: step + 1, job });
            }
        }
        self.dispatch_die(die)?;
        self.dispatch_channel(ch);
        Ok(())
    }

    fn finish_read(&mut self, job: usize) -> Result<(), SimError> {
        let die = self.jobs[job].die;
        self.jobs[job].done = true;
        let trst = self.timing().trst;
        let d = &mut self.dies[die];
        d.ready.retain(|k| k.job != job);
        let ch = d.channel;
        self.channels[ch].bus_queue.retain(|e| e.1 != job);
        self.channels[ch].ecc_queue.retain(|e| e.0 != job);
        let d = &mut self.dies[die];
        match d.latch {
            Latch::Sensing { job: j, .. } if j == job => {
                // the speculative next step is still sensing: terminate it
                d.sense_gen += 1;
                d.latch = Latch::Empty;
                d.op = Some(DieOp::Reset);
                self.stats.resets += 1;
                self.queue.push(self.now + trst, Event::DieOpDone { die });
            }
            Latch::Parked { job: j, .. } if j == job => d.latch = Latch::Empty,
            _ => {}
        }
        let d = &mut self.dies[die];
        if d.cache.is_some_and(|s| s.job == job && !s.on_bus) {
            d.cache = None;
            self.unpark(die);
        }
        let d = &mut self.dies[die];
        if self.sim.recipe.adaptive && d.tpre.is_some() {
            d.ops_queue.push_back(DieOp::SetTpre(None));
        }
        d.outstanding_reads -= 1;
        self.complete_job(job);
        self.dispatch_channel(ch);
        Ok(())
    }

    fn complete_job(&mut self, job: usize) {
        let p = &mut self.parents[self.jobs[job].parent];
        p.remaining -= 1;
        p.completion = p.completion.max(self.now);
        if p.remaining == 0 {
            self.pending -= 1;
        }
    }

    fn start_die_op(&mut self, die: usize, op: DieOp) {
        let t = self.sim.cfg.timing.clone();
        let duration = match op {
            DieOp::SetTpre(Some(_)) => {
                self.stats.set_features += 1;
                t.tset
            }
            DieOp::SetTpre(None) => {
                self.stats.rollbacks += 1;
                t.tset
            }
            DieOp::Reset => t.trst,
            DieOp::Suspend => self.sim.cfg.suspend_overhead,
        };
        self.dies[die].op = Some(op);
        self.queue.push(self.now + duration, Event::DieOpDone { die });
    }

    fn die_op_done(&mut self, die: usize) -> Result<(), SimError> {
        let d = &mut self.dies[die];
        match d.op.take() {
            Some(DieOp::SetTpre(tpre)) => d.tpre = tpre,
            Some(DieOp::Reset | DieOp::Suspend) => {}
            None => return Err(SimError::Invariant(format!("die {die} finished an operation it never started"))),
        }
        self.dispatch_die(die)?;
        self.dispatch_channel(self.dies[die].channel);
        Ok(())
    }

    fn suspend(&mut self, die: usize) {
        let now = self.now;
        let d = &mut self.dies[die];
        let pe = d.pe.as_mut().expect("running program/erase");
        let started = pe.started.take().expect("running program/erase");
        pe.remaining = pe.remaining - (now - started);
        d.pe_gen += 1;
        self.stats.suspensions += 1;
        if self.sim.cfg.suspend_overhead > Nanos::ZERO {
            self.start_die_op(die, DieOp::Suspend);
        }
    }

    fn start_pe(&mut self, die: usize) {
        let now = self.now;
        if self.dies[die].pe.is_none() {
            let job = self.dies[die].pe_queue.pop_front().expect("queued program/erase");
            let remaining = match self.jobs[job].work {
                Work::Program => self.timing().tprog,
                Work::Erase => self.timing().tbers,
                Work::Read(_) => unreachable!(),
            };
            self.dies[die].pe = Some(PeState { job, remaining, started: None });
        }
        let d = &mut self.dies[die];
        let pe = d.pe.as_mut().expect("program/erase present");
        pe.started = Some(now);
        d.pe_gen += 1;
        let gen = d.pe_gen;
        self.queue.push(now + pe.remaining, Event::PeDone { die, gen });
    }

    fn pe_done(&mut self, die: usize) -> Result<(), SimError> {
        let pe = self.dies[die].pe.take().expect("program/erase in progress");
        self.jobs[pe.job].done = true;
        self.complete_job(pe.job);
        self.dispatch_die(die)
    }
}

/// Runs `policy` over `workload` on a fresh device.
pub fn run(
    cfg: &SimConfig,
    policy: PolicyKind,
    workload: &[IoRequest],
    retries: &dyn RetrySource,
    rpt: &RptTable,
) -> Result<SimOutcome, SimError> {
    Simulation::new(cfg, policy, retries, rpt)?.run(workload)
}

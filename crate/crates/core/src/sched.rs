//! Deterministic fixed-priority scheduling of mutator threads and a collector
//! thread.
//!
//! Mutators run at priorities `1..levels`; the collector sits alone at
//! priority 0, so it only ever runs when no mutator is runnable. Within a
//! priority, threads run FIFO and are requeued at the tail after every event.
//! Preemption happens only between events. The clock advances by each
//! event's work units; when nothing can run, it jumps to the next unblock.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Backend;
use crate::baseline::BaselineError;
use crate::error::HeapError;
use crate::heap::Region;
use crate::rng::XorShift64Star;
use crate::workload::WorkloadEvent;

pub const COLLECTOR_PRIORITY: u8 = 0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("at most {0} threads may be created")]
    ThreadLimitExceeded(usize),
    #[error("priority {priority} outside mutator range 1..{levels}")]
    InvalidPriority { priority: u8, levels: u8 },
    #[error("no runnable thread and no pending unblock")]
    Deadlock,
    #[error("`{0}` is not bound")]
    Unbound(String),
    #[error("`{0}` is null")]
    NullHandle(String),
    #[error("`{0}` has the wrong kind for this operation")]
    WrongKind(String),
    #[error("{region:?} region cannot supply {needed} chunks even after collection ({available} free)")]
    OutOfMemory {
        region: Region,
        needed: usize,
        available: usize,
    },
    #[error("thread {thread}, event {index} ({op}): {source}")]
    InEvent {
        thread: usize,
        index: usize,
        op: &'static str,
        source: Box<SimError>,
    },
    #[error("writing trace: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Number of priority levels, including the collector's level 0.
    pub levels: u8,
    pub max_threads: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            max_threads: 64,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadState {
    Runnable,
    Blocked { until: u64 },
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreadDesc {
    pub id: usize,
    pub priority: u8,
    pub state: ThreadState,
    pub program: Vec<WorkloadEvent>,
    pub pc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    Mutator(usize),
    Collector,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: u64,
    /// Clock at the start of the step.
    pub tick: u64,
    pub actor: Actor,
    /// Priority of the executing actor; `None` for idle steps.
    pub priority: Option<u8>,
    /// Highest priority among runnable mutators when the actor was chosen.
    pub max_runnable: Option<u8>,
    pub event: &'static str,
    /// Index of the event in its thread's program.
    pub event_index: Option<usize>,
    pub work_units: u64,
    pub inline_gc_units: u64,
    pub chunks_touched: u64,
    pub bytes_copied: u64,
    pub max_object_chunks: u64,
    /// Threads moved from blocked to runnable at the start of the step.
    pub released: Vec<usize>,
    /// FNV-1a hash of the lane contents after the step.
    pub lane_hash: u64,
}

impl TraceRecord {
    pub fn is_collector(&self) -> bool {
        self.actor == Actor::Collector
    }
}

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    step: u64,
    tick: u64,
    thread: String,
    priority: Option<u8>,
    max_runnable: Option<u8>,
    event: &'a str,
    work_units: u64,
    inline_gc_units: u64,
    lane_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLimit {
    AllFinished,
    Tick(u64),
    Steps(u64),
}

pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub struct Simulator<B> {
    config: SimConfig,
    backend: B,
    threads: Vec<ThreadDesc>,
    /// Index = priority. Lane 0 stays empty; the collector is tracked apart.
    lanes: Vec<VecDeque<usize>>,
    clock: u64,
    steps: u64,
    rng: XorShift64Star,
    trace: Vec<TraceRecord>,
}

impl<B: Backend> Simulator<B> {
    pub fn new(config: SimConfig, backend: B) -> Result<Self, SimError> {
        if config.levels < 2 {
            return Err(SimError::InvalidPriority {
                priority: 1,
                levels: config.levels,
            });
        }
        Ok(Self {
            config,
            backend,
            threads: Vec::new(),
            lanes: vec![VecDeque::new(); config.levels as usize],
            clock: 0,
            steps: 0,
            rng: XorShift64Star::new(config.seed),
            trace: Vec::new(),
        })
    }

    pub fn spawn(&mut self, priority: u8, program: Vec<WorkloadEvent>) -> Result<usize, SimError> {
        if priority == COLLECTOR_PRIORITY || priority >= self.config.levels {
            return Err(SimError::InvalidPriority {
                priority,
                levels: self.config.levels,
            });
        }
        if self.threads.len() >= self.config.max_threads {
            return Err(SimError::ThreadLimitExceeded(self.config.max_threads));
        }
        let id = self.threads.len();
        self.backend.add_thread(id)?;
        let state = if program.is_empty() {
            self.backend.finish_thread(id)?;
            ThreadState::Finished
        } else {
            self.lanes[priority as usize].push_back(id);
            ThreadState::Runnable
        };
        self.threads.push(ThreadDesc {
            id,
            priority,
            state,
            program,
            pc: 0,
        });
        Ok(id)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn threads(&self) -> &[ThreadDesc] {
        &self.threads
    }

    pub fn lane(&self, priority: u8) -> &VecDeque<usize> {
        &self.lanes[priority as usize]
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    pub fn into_backend(self) -> B {
        self.backend
    }

    pub fn all_finished(&self) -> bool {
        self.threads.iter().all(|t| t.state == ThreadState::Finished)
    }

    fn lane_hash(&self) -> u64 {
        let bytes = self.lanes.iter().enumerate().flat_map(|(p, lane)| {
            std::iter::once(p as u8)
                .chain(lane.iter().flat_map(|&t| (t as u32).to_le_bytes()))
                .chain(std::iter::once(0xff))
        });
        fnv1a(bytes)
    }

    fn release(&mut self) -> Vec<usize> {
        let mut released = Vec::new();
        for t in &mut self.threads {
            if let ThreadState::Blocked { until } = t.state {
                if until <= self.clock {
                    t.state = ThreadState::Runnable;
                    self.lanes[t.priority as usize].push_back(t.id);
                    released.push(t.id);
                }
            }
        }
        released
    }

    fn max_runnable(&self) -> Option<u8> {
        (1..self.config.levels)
            .rev()
            .find(|&p| !self.lanes[p as usize].is_empty())
    }

    /// Runs one event. Returns `None` once every mutator has finished.
    pub fn step(&mut self) -> Result<Option<&TraceRecord>, SimError> {
        if self.all_finished() {
            return Ok(None);
        }
        let released = self.release();
        let max_runnable = self.max_runnable();
        let tick = self.clock;
        let mut rec = TraceRecord {
            step: self.steps,
            tick,
            actor: Actor::Idle,
            priority: None,
            max_runnable,
            event: "idle",
            event_index: None,
            work_units: 0,
            inline_gc_units: 0,
            chunks_touched: 0,
            bytes_copied: 0,
            max_object_chunks: 0,
            released,
            lane_hash: 0,
        };
        if let Some(p) = max_runnable {
            let tid = self.lanes[p as usize].pop_front().expect("lane is nonempty");
            let t = &self.threads[tid];
            let index = t.pc;
            let event = t.program[index].clone();
            let cost = self
                .backend
                .execute(tid, &event, &mut self.rng)
                .map_err(|e| SimError::InEvent {
                    thread: tid,
                    index,
                    op: event.op_name(),
                    source: Box::new(e),
                })?;
            self.clock += cost.work_units;
            let t = &mut self.threads[tid];
            t.pc += 1;
            if t.pc == t.program.len() {
                t.state = ThreadState::Finished;
                self.backend.finish_thread(tid)?;
            } else if let WorkloadEvent::BlockIo { ticks } = event {
                t.state = ThreadState::Blocked {
                    until: self.clock + ticks,
                };
            } else {
                self.lanes[p as usize].push_back(tid);
            }
            rec.actor = Actor::Mutator(tid);
            rec.priority = Some(p);
            rec.event = event.op_name();
            rec.event_index = Some(index);
            rec.work_units = cost.work_units;
            rec.inline_gc_units = cost.inline_gc_units;
            rec.chunks_touched = cost.chunks_touched;
            rec.bytes_copied = cost.bytes_copied;
            rec.max_object_chunks = cost.max_object_chunks;
        } else if self.backend.collector_runnable() {
            let (work, label) = self.backend.collector_step()?;
            self.clock += work;
            rec.actor = Actor::Collector;
            rec.priority = Some(COLLECTOR_PRIORITY);
            rec.event = label;
            rec.work_units = work;
        } else {
            let next = self
                .threads
                .iter()
                .filter_map(|t| match t.state {
                    ThreadState::Blocked { until } => Some(until),
                    _ => None,
                })
                .min()
                .ok_or(SimError::Deadlock)?;
            rec.work_units = next - self.clock;
            self.clock = next;
        }
        rec.lane_hash = self.lane_hash();
        self.steps += 1;
        self.trace.push(rec);
        Ok(self.trace.last())
    }

    pub fn run_until(&mut self, limit: RunLimit) -> Result<&[TraceRecord], SimError> {
        loop {
            let stop = match limit {
                RunLimit::AllFinished => false,
                RunLimit::Tick(t) => self.clock >= t,
                RunLimit::Steps(n) => self.steps >= n,
            };
            if stop || self.step()?.is_none() {
                return Ok(&self.trace);
            }
        }
    }

    /// Writes the trace as CSV. See [`write_trace_csv`].
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        write_trace_csv(&self.trace, out)
    }
}

/// Writes trace records as CSV. Contains no wall-clock data, so equal inputs
/// give byte-identical output.
pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in trace {
        let thread = match r.actor {
            Actor::Mutator(t) => t.to_string(),
            Actor::Collector => "collector".into(),
            Actor::Idle => "idle".into(),
        };
        w.serialize(TraceRow {
            step: r.step,
            tick: r.tick,
            thread,
            priority: r.priority,
            max_runnable: r.max_runnable,
            event: r.event,
            work_units: r.work_units,
            inline_gc_units: r.inline_gc_units,
            lane_hash: format!("{:016x}", r.lane_hash),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

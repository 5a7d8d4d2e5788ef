//! Non-moving mark-sweep collection over the chunked heap.
//!
//! A cycle snapshots the roots, marks in bounded increments and then sweeps
//! both collected regions in bounded increments. One work unit is one chunk
//! visit (mark) or one slot scanned (sweep), so each step can be sized to fit
//! the slack a scheduler has available.
//!
//! Mutators may run between steps. Ref overwrites during marking are logged by
//! the heap (snapshot-at-the-beginning deletion barrier) and drained here as
//! extra gray sources, and chunks allocated while marking, or ahead of the
//! sweep cursor, start out marked. Together these guarantee that a cycle never
//! frees anything that was reachable when it started.

use crate::heap::{decode_ref_head, read_le, ChunkIndex, ChunkKind, ElemKind, Handle, Heap, ObjSlot, Phase, Region, HANDLE_BYTES};

/// Roots supplied by the embedder. Stack frame slots are added by the heap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RootSet {
    pub globals: Vec<Handle>,
}

impl RootSet {
    pub fn new(globals: impl IntoIterator<Item = Handle>) -> Self {
        Self {
            globals: globals.into_iter().collect(),
        }
    }

    pub fn push(&mut self, h: impl Into<Handle>) {
        self.globals.push(h.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkProgress {
    InProgress,
    MarkDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepProgress {
    InProgress,
    SweepDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaybeCollect {
    NoNeed,
    /// Collection ran inline and the request can now be met.
    CycleStarted { work_units: u64 },
    /// A complete cycle still leaves too few free chunks.
    Unsatisfiable { work_units: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectionStats {
    pub marked_chunks: u64,
    pub swept_free_chunks: u64,
    pub mark_work_units: u64,
    pub sweep_work_units: u64,
    /// `(start, end)` of each increment on the collector's work clock.
    pub pause_segments: Vec<(u64, u64)>,
}

impl CollectionStats {
    pub fn work_units(&self) -> u64 {
        self.mark_work_units + self.sweep_work_units
    }
}

/// Result of one scheduler-sized collector increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub work_units: u64,
    pub cycle_done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectorState {
    pub phase: Phase,
    pub worklist: Vec<ChunkIndex>,
    pub sweep_cursor: (Region, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collector {
    state: CollectorState,
    current: CollectionStats,
    last: Option<CollectionStats>,
    cycles_completed: u64,
    clock: u64,
}

impl Default for Collector {
    fn default() -> Self {
        Self::new()
    }
}

impl Collector {
    pub fn new() -> Self {
        Self {
            state: CollectorState {
                phase: Phase::Idle,
                worklist: Vec::new(),
                sweep_cursor: (Region::Objects, 0),
            },
            current: CollectionStats::default(),
            last: None,
            cycles_completed: 0,
            clock: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn state(&self) -> &CollectorState {
        &self.state
    }

    pub fn current_stats(&self) -> &CollectionStats {
        &self.current
    }

    pub fn last_cycle(&self) -> Option<&CollectionStats> {
        self.last.as_ref()
    }

    pub fn cycles_completed(&self) -> u64 {
        self.cycles_completed
    }

    /// Total work units performed over the collector's lifetime.
    pub fn work_clock(&self) -> u64 {
        self.clock
    }

    /// Starts a cycle by graying every root. Returns false if a cycle is
    /// already running.
    pub fn begin_cycle(&mut self, heap: &mut Heap, roots: &RootSet) -> bool {
        if self.state.phase != Phase::Idle {
            return false;
        }
        debug_assert_eq!(heap.gc.phase, Phase::Idle);
        self.state.phase = Phase::Marking;
        self.state.worklist.clear();
        heap.gc.phase = Phase::Marking;
        heap.gc.satb_log.clear();
        let stack_roots: Vec<Handle> = heap.stack_roots().collect();
        for h in roots.globals.iter().chain(&stack_roots) {
            self.shade(heap, Some(h.head()));
        }
        true
    }

    fn shade(&mut self, heap: &mut Heap, idx: Option<ChunkIndex>) {
        let Some(idx) = idx else { return };
        let meta = &mut heap.store_mut(idx.region).meta[idx.idx()];
        if meta.mark || meta.kind == ChunkKind::Free {
            return;
        }
        meta.mark = true;
        self.current.marked_chunks += 1;
        self.state.worklist.push(idx);
    }

    fn scan(&mut self, heap: &mut Heap, idx: ChunkIndex) {
        let meta = *heap.chunk_meta(idx);
        let mut found: Vec<Option<ChunkIndex>> = Vec::new();
        match meta.kind {
            ChunkKind::ObjectFirst => {
                let ObjSlot::First(t) = heap.obj_slots[idx.idx()] else {
                    unreachable!("object head without a type")
                };
                let limit = meta.cont.map_or(usize::MAX, |_| meta.co as usize);
                let payload = heap.chunk_payload(idx);
                for &off in heap.type_descriptor(t).ref_offsets.iter().filter(|&&o| o < limit) {
                    found.push(decode_ref_head(read_le(&payload[off..off + HANDLE_BYTES])));
                }
                found.push(meta.cont);
            }
            ChunkKind::ObjectCont => {
                let ObjSlot::Cont { first } = heap.obj_slots[idx.idx()] else {
                    unreachable!("continuation without an owner")
                };
                let head = ChunkIndex::new(Region::Objects, first);
                let co = heap.chunk_meta(head).co as usize;
                let ObjSlot::First(t) = heap.obj_slots[first as usize] else {
                    unreachable!("continuation owner is not an object head")
                };
                let payload = heap.chunk_payload(idx);
                for &off in heap.type_descriptor(t).ref_offsets.iter().filter(|&&o| o >= co) {
                    let at = off - co;
                    found.push(decode_ref_head(read_le(&payload[at..at + HANDLE_BYTES])));
                }
            }
            ChunkKind::ArrayLeaf => {
                let info = *heap.leaf_info(idx);
                let is_ref = heap
                    .array_header_at(info.owner)
                    .is_some_and(|h| h.elem == ElemKind::Ref);
                if is_ref {
                    for slot in heap.chunk_payload(idx).chunks_exact(HANDLE_BYTES) {
                        found.push(decode_ref_head(read_le(slot)));
                    }
                }
                found.push(info.root);
                found.push(info.next_leaf);
            }
            ChunkKind::ArrayInternal => {
                found.extend(heap.chunk_children(idx).map(Some));
                found.push(meta.cont);
            }
            ChunkKind::Free | ChunkKind::StackFrame => {}
        }
        for f in found {
            self.shade(heap, f);
        }
    }

    fn record_segment(&mut self, used: u64) {
        if used > 0 {
            self.current.pause_segments.push((self.clock, self.clock + used));
            self.clock += used;
        }
    }

    /// Visits at most `budget` chunks. Finishes marking once the worklist and
    /// the barrier log are both empty.
    pub fn mark_step(&mut self, heap: &mut Heap, budget: usize) -> MarkProgress {
        if self.state.phase != Phase::Marking {
            return MarkProgress::MarkDone;
        }
        if budget == 0 {
            return MarkProgress::InProgress;
        }
        let mut used = 0;
        let progress = loop {
            if self.state.worklist.is_empty() {
                let log = std::mem::take(&mut heap.gc.satb_log);
                for h in log {
                    self.shade(heap, Some(h.head()));
                }
                if self.state.worklist.is_empty() {
                    self.state.phase = Phase::Sweeping;
                    self.state.sweep_cursor = (Region::Objects, 0);
                    heap.gc.phase = Phase::Sweeping;
                    heap.gc.sweep_pos = [0, 0];
                    break MarkProgress::MarkDone;
                }
            }
            if used == budget {
                break MarkProgress::InProgress;
            }
            let idx = self.state.worklist.pop().expect("checked nonempty");
            self.scan(heap, idx);
            used += 1;
        };
        self.current.mark_work_units += used as u64;
        self.record_segment(used as u64);
        progress
    }

    /// Scans at most `budget` slots, freeing unmarked chunks and clearing
    /// marks on the rest.
    pub fn sweep_step(&mut self, heap: &mut Heap, budget: usize) -> SweepProgress {
        if self.state.phase != Phase::Sweeping {
            return SweepProgress::SweepDone;
        }
        if budget == 0 {
            return SweepProgress::InProgress;
        }
        let mut used = 0;
        let mut done = false;
        loop {
            let (region, mut pos) = self.state.sweep_cursor;
            let r = if region == Region::Objects { 0 } else { 1 };
            let cap = heap.capacity(region);
            while pos < cap && used < budget {
                let idx = ChunkIndex::new(region, pos as u32);
                let meta = &mut heap.store_mut(region).meta[pos];
                if meta.kind != ChunkKind::Free {
                    if meta.mark {
                        meta.mark = false;
                    } else {
                        heap.free_chunk(idx);
                        self.current.swept_free_chunks += 1;
                    }
                }
                pos += 1;
                used += 1;
            }
            heap.gc.sweep_pos[r] = pos;
            self.state.sweep_cursor = (region, pos);
            if pos < cap {
                break;
            }
            if region == Region::Objects {
                self.state.sweep_cursor = (Region::Arrays, 0);
            } else {
                done = true;
                break;
            }
        }
        self.current.sweep_work_units += used as u64;
        self.record_segment(used as u64);
        if !done {
            return SweepProgress::InProgress;
        }
        self.state.phase = Phase::Idle;
        heap.gc.phase = Phase::Idle;
        self.cycles_completed += 1;
        self.last = Some(std::mem::take(&mut self.current));
        SweepProgress::SweepDone
    }

    /// One increment sized by the phase's budget.
    pub fn step(&mut self, heap: &mut Heap, mark_budget: usize, sweep_budget: usize) -> StepOutcome {
        let before = self.clock;
        let cycle_done = match self.state.phase {
            Phase::Idle => false,
            Phase::Marking => {
                self.mark_step(heap, mark_budget);
                false
            }
            Phase::Sweeping => self.sweep_step(heap, sweep_budget) == SweepProgress::SweepDone,
        };
        StepOutcome {
            work_units: self.clock - before,
            cycle_done,
        }
    }

    /// Runs the current cycle, if any, to completion. Returns the work spent.
    pub fn finish_cycle(&mut self, heap: &mut Heap) -> u64 {
        let before = self.clock;
        while self.state.phase == Phase::Marking {
            self.mark_step(heap, usize::MAX);
        }
        if self.state.phase == Phase::Sweeping {
            self.sweep_step(heap, usize::MAX);
        }
        self.clock - before
    }

    /// Runs one complete cycle from a fresh root snapshot. A cycle already in
    /// progress is finished first.
    pub fn collect_full(&mut self, heap: &mut Heap, roots: &RootSet) -> CollectionStats {
        self.finish_cycle(heap);
        self.begin_cycle(heap, roots);
        self.finish_cycle(heap);
        self.last.clone().expect("a cycle just completed")
    }

    /// Limit-check escalation. If the region cannot supply `n_chunks`, runs
    /// collection inline: first the cycle in progress, then if needed a fresh
    /// one.
    pub fn maybe_collect(
        &mut self,
        heap: &mut Heap,
        roots: &RootSet,
        region: Region,
        n_chunks: usize,
    ) -> MaybeCollect {
        if heap.reserve(region, n_chunks) {
            return MaybeCollect::NoNeed;
        }
        let mut work = 0;
        if self.state.phase != Phase::Idle {
            work += self.finish_cycle(heap);
            if heap.reserve(region, n_chunks) {
                return MaybeCollect::CycleStarted { work_units: work };
            }
        }
        self.begin_cycle(heap, roots);
        work += self.finish_cycle(heap);
        if heap.reserve(region, n_chunks) {
            MaybeCollect::CycleStarted { work_units: work }
        } else {
            MaybeCollect::Unsatisfiable { work_units: work }
        }
    }
}

//! Executes workload events against one of the two heaps. Each simulated
//! thread owns a set of named bindings; together with frame slots these are
//! the roots for every collection.

use std::collections::BTreeMap;

use crate::baseline::{BaselineConfig, ObjId, SemispaceHeap, Shape};
use crate::collector::{Collector, MaybeCollect, RootSet};
use crate::heap::{
    ArrayHandle, ElemKind, FrameDescriptor, Handle, Heap, HeapConfig, ObjectHandle, Phase, Region,
    StackHandle, TypeDescriptor, Value,
};
use crate::rng::XorShift64Star;
use crate::sched::SimError;
use crate::workload::{Operand, WorkloadEvent};

/// Element width of the arrays built by `maybe_none_some_array`.
pub const INT_ELEM: ElemKind = ElemKind::Data(4);
/// Size of the option box wrapping a `SOME` array: one reference.
pub const OPTION_BOX_BYTES: usize = 8;

/// Cost and effects of one event. `work_units` already includes
/// `inline_gc_units`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCost {
    pub work_units: u64,
    pub inline_gc_units: u64,
    pub chunks_touched: u64,
    pub bytes_copied: u64,
    /// Largest chunk count of any single object allocated by the event.
    pub max_object_chunks: u64,
}

pub trait Backend {
    fn kind(&self) -> &'static str;
    fn add_thread(&mut self, tid: usize) -> Result<(), SimError>;
    fn execute(
        &mut self,
        tid: usize,
        event: &WorkloadEvent,
        rng: &mut XorShift64Star,
    ) -> Result<EventCost, SimError>;
    /// Releases the thread's bindings and frames.
    fn finish_thread(&mut self, tid: usize) -> Result<(), SimError>;
    /// Whether a collector thread has work it could do in slack time.
    fn collector_runnable(&self) -> bool;
    /// One bounded collector increment. Returns its work units and a label.
    fn collector_step(&mut self) -> Result<(u64, &'static str), SimError>;
}

type Bindings<H> = BTreeMap<usize, BTreeMap<String, Option<H>>>;

fn lookup<H: Copy>(b: &Bindings<H>, tid: usize, name: &str) -> Result<Option<H>, SimError> {
    b.get(&tid)
        .and_then(|m| m.get(name))
        .copied()
        .ok_or_else(|| SimError::Unbound(name.to_string()))
}

fn non_null<H: Copy>(b: &Bindings<H>, tid: usize, name: &str) -> Result<H, SimError> {
    lookup(b, tid, name)?.ok_or_else(|| SimError::NullHandle(name.to_string()))
}

fn bind<H>(b: &mut Bindings<H>, tid: usize, name: &str, h: Option<H>) {
    b.entry(tid).or_default().insert(name.to_string(), h);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedConfig {
    pub heap: HeapConfig,
    pub mark_budget: usize,
    pub sweep_budget: usize,
    /// The collector becomes runnable when a collected region's free fraction
    /// drops below this.
    pub gc_trigger: f64,
}

impl Default for ChunkedConfig {
    fn default() -> Self {
        Self {
            heap: HeapConfig::default(),
            mark_budget: 64,
            sweep_budget: 256,
            gc_trigger: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChunkedBackend {
    heap: Heap,
    collector: Collector,
    config: ChunkedConfig,
    bindings: Bindings<Handle>,
    stacks: BTreeMap<usize, StackHandle>,
}

impl ChunkedBackend {
    pub fn new(config: ChunkedConfig) -> Result<Self, SimError> {
        Ok(Self {
            heap: Heap::new(config.heap.clone())?,
            collector: Collector::new(),
            config,
            bindings: BTreeMap::new(),
            stacks: BTreeMap::new(),
        })
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    pub fn roots(&self) -> RootSet {
        RootSet::new(self.bindings.values().flat_map(|m| m.values().flatten().copied()))
    }

    fn object(&self, tid: usize, name: &str) -> Result<ObjectHandle, SimError> {
        match non_null(&self.bindings, tid, name)? {
            Handle::Object(o) => Ok(o),
            Handle::Array(_) => Err(SimError::WrongKind(name.to_string())),
        }
    }

    fn array(&self, tid: usize, name: &str) -> Result<ArrayHandle, SimError> {
        match non_null(&self.bindings, tid, name)? {
            Handle::Array(a) => Ok(a),
            Handle::Object(_) => Err(SimError::WrongKind(name.to_string())),
        }
    }

    fn value(&self, tid: usize, v: &Operand) -> Result<Value, SimError> {
        Ok(match v {
            Operand::Int(w) => Value::Word(*w),
            Operand::Null => Value::Ref(None),
            Operand::Handle(n) => Value::Ref(lookup(&self.bindings, tid, n)?),
        })
    }

    /// Limit check: make `n` chunks available, collecting inline if needed.
    fn ensure(&mut self, region: Region, n: usize) -> Result<u64, SimError> {
        let roots = self.roots();
        match self.collector.maybe_collect(&mut self.heap, &roots, region, n) {
            MaybeCollect::NoNeed => Ok(0),
            MaybeCollect::CycleStarted { work_units } => Ok(work_units),
            MaybeCollect::Unsatisfiable { .. } => Err(SimError::OutOfMemory {
                region,
                needed: n,
                available: self.heap.free_count(region),
            }),
        }
    }

    fn alloc_array(&mut self, elem: ElemKind, n: usize, cost: &mut EventCost) -> Result<ArrayHandle, SimError> {
        let chunks = self.heap.array_layout(elem, n)?.total_chunks;
        cost.inline_gc_units += self.ensure(Region::Arrays, chunks)?;
        let a = self.heap.alloc_array(elem, n)?;
        cost.chunks_touched += chunks as u64;
        Ok(a)
    }

    fn alloc_object(&mut self, td: TypeDescriptor, cost: &mut EventCost) -> Result<ObjectHandle, SimError> {
        let t = self.heap.register_type(td)?;
        let chunks = self.heap.object_chunks(self.heap.type_descriptor(t).byte_size);
        cost.inline_gc_units += self.ensure(Region::Objects, chunks)?;
        let o = self.heap.alloc_object(t)?;
        cost.chunks_touched += chunks as u64;
        cost.max_object_chunks = cost.max_object_chunks.max(chunks as u64);
        Ok(o)
    }

    fn free_fraction(&self, region: Region) -> f64 {
        self.heap.free_count(region) as f64 / self.heap.capacity(region) as f64
    }
}

impl Backend for ChunkedBackend {
    fn kind(&self) -> &'static str {
        "chunked"
    }

    fn add_thread(&mut self, tid: usize) -> Result<(), SimError> {
        let s = self.heap.new_stack();
        self.stacks.insert(tid, s);
        self.bindings.entry(tid).or_default();
        Ok(())
    }

    fn execute(
        &mut self,
        tid: usize,
        event: &WorkloadEvent,
        rng: &mut XorShift64Star,
    ) -> Result<EventCost, SimError> {
        let mut cost = EventCost::default();
        let mut extra = 0;
        match event {
            WorkloadEvent::AllocObj {
                name,
                size,
                ref_offsets,
            } => {
                let o = self.alloc_object(TypeDescriptor::new(*size, ref_offsets.clone()), &mut cost)?;
                bind(&mut self.bindings, tid, name, Some(o.into()));
            }
            WorkloadEvent::AllocArray { name, elem, n } => {
                let a = self.alloc_array(*elem, *n, &mut cost)?;
                bind(&mut self.bindings, tid, name, Some(a.into()));
            }
            WorkloadEvent::MaybeNoneSomeArray { name, n, p } => {
                let h = if rng.bernoulli(*p) {
                    // Both reservations precede both allocations, so neither
                    // new value can be collected before it is bound.
                    let chunks = self.heap.array_layout(INT_ELEM, *n)?.total_chunks;
                    cost.inline_gc_units += self.ensure(Region::Arrays, chunks)?;
                    cost.inline_gc_units += self.ensure(Region::Objects, 1)?;
                    let a = self.alloc_array(INT_ELEM, *n, &mut cost)?;
                    let o = self.alloc_object(TypeDescriptor::new(OPTION_BOX_BYTES, vec![0]), &mut cost)?;
                    self.heap.write_field(&o, 0, Value::Ref(Some(a.into())))?;
                    Some(o.into())
                } else {
                    None
                };
                bind(&mut self.bindings, tid, name, h);
            }
            WorkloadEvent::WriteField { obj, offset, value } => {
                let o = self.object(tid, obj)?;
                let v = self.value(tid, value)?;
                self.heap.write_field(&o, *offset, v)?;
            }
            WorkloadEvent::ReadField { obj, offset, bind: b } => {
                let o = self.object(tid, obj)?;
                let v = self.heap.read_field(&o, *offset)?;
                if let Some(b) = b {
                    match v {
                        Value::Ref(h) => bind(&mut self.bindings, tid, b, h),
                        Value::Word(_) => return Err(SimError::WrongKind(b.clone())),
                    }
                }
            }
            WorkloadEvent::WriteElem { arr, index, value } => {
                let a = self.array(tid, arr)?;
                let v = self.value(tid, value)?;
                let before = self.heap.counters().node_visits;
                self.heap.array_write(&a, *index, v)?;
                extra = self.heap.counters().node_visits - before;
            }
            WorkloadEvent::ReadElem { arr, index, bind: b } => {
                let a = self.array(tid, arr)?;
                let before = self.heap.counters().node_visits;
                let v = self.heap.array_read(&a, *index)?;
                extra = self.heap.counters().node_visits - before;
                if let Some(b) = b {
                    match v {
                        Value::Ref(h) => bind(&mut self.bindings, tid, b, h),
                        Value::Word(_) => return Err(SimError::WrongKind(b.clone())),
                    }
                }
            }
            WorkloadEvent::DropRoot { name } => {
                lookup(&self.bindings, tid, name)?;
                self.bindings.entry(tid).or_default().remove(name);
            }
            WorkloadEvent::PushFrame { names } => {
                let slots = names
                    .iter()
                    .map(|n| lookup(&self.bindings, tid, n))
                    .collect::<Result<Vec<_>, _>>()?;
                self.heap.push_frame(self.stacks[&tid], FrameDescriptor::new(slots))?;
                cost.chunks_touched += 1;
            }
            WorkloadEvent::PopFrame => {
                self.heap.pop_frame(self.stacks[&tid])?;
            }
            WorkloadEvent::Compute { work } => {
                cost.work_units = (*work).max(1);
                return Ok(cost);
            }
            WorkloadEvent::BlockIo { .. } => {}
        }
        cost.work_units = 1 + extra + cost.chunks_touched + cost.inline_gc_units;
        Ok(cost)
    }

    fn finish_thread(&mut self, tid: usize) -> Result<(), SimError> {
        self.bindings.remove(&tid);
        if let Some(s) = self.stacks.remove(&tid) {
            self.heap.drop_stack(s)?;
        }
        Ok(())
    }

    fn collector_runnable(&self) -> bool {
        self.collector.phase() != Phase::Idle
            || Region::COLLECTED
                .iter()
                .any(|&r| self.free_fraction(r) < self.config.gc_trigger)
    }

    fn collector_step(&mut self) -> Result<(u64, &'static str), SimError> {
        let phase = self.collector.phase();
        if phase == Phase::Idle {
            let roots = self.roots();
            let n = roots.globals.len() as u64 + self.heap.stack_roots().count() as u64;
            self.collector.begin_cycle(&mut self.heap, &roots);
            return Ok((n.max(1), "gc_begin"));
        }
        let out = self
            .collector
            .step(&mut self.heap, self.config.mark_budget, self.config.sweep_budget);
        let label = if phase == Phase::Marking { "gc_mark" } else { "gc_sweep" };
        Ok((out.work_units.max(1), label))
    }
}

#[derive(Debug, Clone)]
pub struct BaselineBackend {
    heap: SemispaceHeap,
    bindings: Bindings<ObjId>,
    frames: BTreeMap<usize, Vec<Vec<Option<ObjId>>>>,
}

impl BaselineBackend {
    pub fn new(config: BaselineConfig) -> Result<Self, SimError> {
        Ok(Self {
            heap: SemispaceHeap::new(config)?,
            bindings: BTreeMap::new(),
            frames: BTreeMap::new(),
        })
    }

    pub fn heap(&self) -> &SemispaceHeap {
        &self.heap
    }

    pub fn roots(&self) -> Vec<ObjId> {
        let named = self.bindings.values().flat_map(|m| m.values().flatten().copied());
        let framed = self.frames.values().flatten().flatten().flatten().copied();
        named.chain(framed).collect()
    }

    fn value_ref(&self, tid: usize, v: &Operand) -> Result<Option<Option<ObjId>>, SimError> {
        Ok(match v {
            Operand::Int(_) => None,
            Operand::Null => Some(None),
            Operand::Handle(n) => Some(lookup(&self.bindings, tid, n)?),
        })
    }

    fn alloc(&mut self, extra_roots: &[ObjId], size: usize, shape: Shape, cost: &mut EventCost) -> Result<ObjId, SimError> {
        let mut roots = self.roots();
        roots.extend_from_slice(extra_roots);
        let r = self.heap.b_alloc(&roots, size.max(1), shape)?;
        cost.inline_gc_units += r.moves.work_units;
        cost.bytes_copied += r.moves.bytes_copied;
        // Allocation work beyond the collections it triggered.
        cost.work_units += r.work_units - r.moves.work_units;
        Ok(r.id)
    }

    fn write(&mut self, tid: usize, name: &str, key: usize, v: &Operand) -> Result<(), SimError> {
        let id = non_null(&self.bindings, tid, name)?;
        match (self.value_ref(tid, v)?, v) {
            (Some(target), _) => self.heap.write_ref(id, key, target)?,
            (None, Operand::Int(w)) => self.heap.write_word(id, key, *w)?,
            (None, _) => unreachable!("only integers carry no reference"),
        }
        Ok(())
    }

    fn read(&mut self, tid: usize, name: &str, key: usize, b: &Option<String>) -> Result<(), SimError> {
        let id = non_null(&self.bindings, tid, name)?;
        match b {
            Some(b) => {
                let target = self.heap.read_ref(id, key).map_err(|_| SimError::WrongKind(b.clone()))?;
                bind(&mut self.bindings, tid, b, target);
            }
            None => {
                if self.heap.read_word(id, key).is_err() {
                    self.heap.read_ref(id, key)?;
                }
            }
        }
        Ok(())
    }
}

impl Backend for BaselineBackend {
    fn kind(&self) -> &'static str {
        "baseline"
    }

    fn add_thread(&mut self, tid: usize) -> Result<(), SimError> {
        self.bindings.entry(tid).or_default();
        self.frames.entry(tid).or_default();
        Ok(())
    }

    fn execute(
        &mut self,
        tid: usize,
        event: &WorkloadEvent,
        rng: &mut XorShift64Star,
    ) -> Result<EventCost, SimError> {
        let mut cost = EventCost::default();
        match event {
            WorkloadEvent::AllocObj {
                name,
                size,
                ref_offsets,
            } => {
                let shape = Shape::Object {
                    ref_offsets: ref_offsets.clone(),
                };
                let id = self.alloc(&[], *size, shape, &mut cost)?;
                bind(&mut self.bindings, tid, name, Some(id));
            }
            WorkloadEvent::AllocArray { name, elem, n } => {
                let shape = Shape::Array { elem: *elem, len: *n };
                let id = self.alloc(&[], elem.size() * n, shape, &mut cost)?;
                bind(&mut self.bindings, tid, name, Some(id));
            }
            WorkloadEvent::MaybeNoneSomeArray { name, n, p } => {
                let h = if rng.bernoulli(*p) {
                    let shape = Shape::Array { elem: INT_ELEM, len: *n };
                    let a = self.alloc(&[], INT_ELEM.size() * n, shape, &mut cost)?;
                    let boxed = Shape::Object {
                        ref_offsets: vec![0],
                    };
                    let o = self.alloc(&[a], OPTION_BOX_BYTES, boxed, &mut cost)?;
                    self.heap.write_ref(o, 0, Some(a))?;
                    Some(o)
                } else {
                    None
                };
                bind(&mut self.bindings, tid, name, h);
            }
            WorkloadEvent::WriteField { obj, offset, value } => self.write(tid, obj, *offset, value)?,
            WorkloadEvent::ReadField { obj, offset, bind: b } => self.read(tid, obj, *offset, b)?,
            WorkloadEvent::WriteElem { arr, index, value } => self.write(tid, arr, *index, value)?,
            WorkloadEvent::ReadElem { arr, index, bind: b } => self.read(tid, arr, *index, b)?,
            WorkloadEvent::DropRoot { name } => {
                lookup(&self.bindings, tid, name)?;
                self.bindings.entry(tid).or_default().remove(name);
            }
            WorkloadEvent::PushFrame { names } => {
                let slots = names
                    .iter()
                    .map(|n| lookup(&self.bindings, tid, n))
                    .collect::<Result<Vec<_>, _>>()?;
                self.frames.entry(tid).or_default().push(slots);
            }
            WorkloadEvent::PopFrame => {
                self.frames
                    .entry(tid)
                    .or_default()
                    .pop()
                    .ok_or(crate::error::HeapError::EmptyStack)?;
            }
            WorkloadEvent::Compute { work } => {
                cost.work_units = (*work).max(1);
                return Ok(cost);
            }
            WorkloadEvent::BlockIo { .. } => {}
        }
        cost.work_units += 1 + cost.inline_gc_units;
        Ok(cost)
    }

    fn finish_thread(&mut self, tid: usize) -> Result<(), SimError> {
        self.bindings.remove(&tid);
        self.frames.remove(&tid);
        Ok(())
    }

    fn collector_runnable(&self) -> bool {
        false
    }

    fn collector_step(&mut self) -> Result<(u64, &'static str), SimError> {
        Ok((0, "gc_none"))
    }
}

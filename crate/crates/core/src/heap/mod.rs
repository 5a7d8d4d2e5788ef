//! The three-region chunked heap.
//!
//! Objects, arrays and stack frames live in separate regions made of
//! fixed-size chunks. Object and array chunks come from per-region LIFO free
//! lists, so allocation is constant time and nothing ever moves: a handle's
//! head chunk is its identity for the whole lifetime of the value.
//!
//! Objects larger than one chunk payload are split across two chunks. The
//! first chunk's metadata records the continuation chunk and the continuation
//! offset (CO), the smallest field offset stored in the second chunk, so a
//! field resolves with a single comparison.

mod chunk;
mod config;
mod handle;
mod stack;

use std::cell::Cell;
use std::collections::HashMap;

pub use chunk::{ChunkIndex, ChunkKind, ChunkMeta, FreeList, Region};
pub use config::{HeapConfig, HANDLE_BYTES, WORD_BYTES};
pub use handle::{ArrayHandle, ElemKind, Handle, ObjectHandle, TypeDescriptor, TypeId, Value};
pub use stack::{FrameDescriptor, StackHandle};

pub(crate) use chunk::RegionStore;
pub(crate) use handle::{decode_ref_head, encode_ref, read_le, write_le};

use crate::error::{HeapError, Result};

/// Collector phase as seen by the mutator-facing heap operations: it decides
/// whether ref overwrites are logged and what color fresh chunks get.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    Marking,
    Sweeping,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GcView {
    pub phase: Phase,
    /// Per collected region, the first slot the sweeper has not yet passed.
    pub sweep_pos: [usize; 2],
    /// Handles overwritten in ref slots while marking.
    pub satb_log: Vec<Handle>,
}

/// What an object-region slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ObjSlot {
    Unused,
    First(TypeId),
    Cont { first: u32 },
}

/// Side data of an array-region chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct LeafInfo {
    pub root: Option<ChunkIndex>,
    pub next_leaf: Option<ChunkIndex>,
    /// Slot of the array's first leaf (owner of the header).
    pub owner: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ArrayHeader {
    pub length: usize,
    pub elem: ElemKind,
}

/// Instrumentation counters. Read paths bump `node_visits` through a `Cell`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Counters {
    pub node_visits: Cell<u64>,
    pub objects_allocated: u64,
    pub arrays_allocated: u64,
    pub last_alloc_chunks: usize,
    pub max_object_chunks: usize,
    pub barrier_records: u64,
}

/// Plain snapshot of the heap's instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeapCounters {
    pub node_visits: u64,
    pub objects_allocated: u64,
    pub arrays_allocated: u64,
    /// Chunks touched by the most recent object or array allocation.
    pub last_alloc_chunks: usize,
    /// Largest chunk count touched by any single object allocation.
    pub max_object_chunks: usize,
    pub barrier_records: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heap {
    pub(crate) config: HeapConfig,
    pub(crate) objects: RegionStore,
    pub(crate) arrays: RegionStore,
    pub(crate) stacks: RegionStore,
    types: Vec<TypeDescriptor>,
    type_ids: HashMap<TypeDescriptor, TypeId>,
    pub(crate) obj_slots: Vec<ObjSlot>,
    pub(crate) leaves: Vec<LeafInfo>,
    pub(crate) headers: Vec<Option<ArrayHeader>>,
    pub(crate) frames: Vec<Option<FrameDescriptor>>,
    pub(crate) stack_list: Vec<Option<Vec<ChunkIndex>>>,
    pub(crate) gc: GcView,
    pub(crate) counters: Counters,
}

impl Heap {
    pub fn new(config: HeapConfig) -> Result<Self> {
        config.validate()?;
        let objects = RegionStore::new(
            Region::Objects,
            config.object_region_chunks,
            config.normal_payload_bytes,
        );
        let arrays = RegionStore::new(
            Region::Arrays,
            config.array_region_chunks,
            config.array_leaf_payload_bytes,
        );
        // Frame contents live in the descriptor table; frame chunks carry no bytes.
        let stacks = RegionStore::new(Region::Stacks, config.stack_region_chunks, 0);
        Ok(Self {
            obj_slots: vec![ObjSlot::Unused; config.object_region_chunks],
            leaves: vec![LeafInfo::default(); config.array_region_chunks],
            headers: vec![None; config.array_region_chunks],
            frames: vec![None; config.stack_region_chunks],
            stack_list: Vec::new(),
            types: Vec::new(),
            type_ids: HashMap::new(),
            gc: GcView {
                phase: Phase::Idle,
                sweep_pos: [0, 0],
                satb_log: Vec::new(),
            },
            counters: Counters::default(),
            config,
            objects,
            arrays,
            stacks,
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.gc.phase
    }

    pub(crate) fn store(&self, region: Region) -> &RegionStore {
        match region {
            Region::Objects => &self.objects,
            Region::Arrays => &self.arrays,
            Region::Stacks => &self.stacks,
        }
    }

    pub(crate) fn store_mut(&mut self, region: Region) -> &mut RegionStore {
        match region {
            Region::Objects => &mut self.objects,
            Region::Arrays => &mut self.arrays,
            Region::Stacks => &mut self.stacks,
        }
    }

    pub fn capacity(&self, region: Region) -> usize {
        self.store(region).capacity()
    }

    pub fn free_count(&self, region: Region) -> usize {
        self.store(region).free.count
    }

    pub fn allocated_count(&self, region: Region) -> usize {
        self.store(region).allocated
    }

    pub fn free_list(&self, region: Region) -> FreeList {
        self.store(region).free
    }

    pub fn chunk_meta(&self, idx: ChunkIndex) -> &ChunkMeta {
        &self.store(idx.region).meta[idx.idx()]
    }

    /// Raw payload bytes of a chunk.
    pub fn chunk_payload(&self, idx: ChunkIndex) -> &[u8] {
        self.store(idx.region).payload(idx)
    }

    pub fn counters(&self) -> HeapCounters {
        let c = &self.counters;
        HeapCounters {
            node_visits: c.node_visits.get(),
            objects_allocated: c.objects_allocated,
            arrays_allocated: c.arrays_allocated,
            last_alloc_chunks: c.last_alloc_chunks,
            max_object_chunks: c.max_object_chunks,
            barrier_records: c.barrier_records,
        }
    }

    pub(crate) fn visit_node(&self) {
        self.counters.node_visits.set(self.counters.node_visits.get() + 1);
    }

    /// Limit check: does the region hold at least `n_chunks` free chunks?
    /// Never changes heap state.
    pub fn reserve(&self, region: Region, n_chunks: usize) -> bool {
        self.free_count(region) >= n_chunks
    }

    pub fn register_type(&mut self, td: TypeDescriptor) -> Result<TypeId> {
        td.validate(self.config.max_object_bytes())?;
        if let Some(&id) = self.type_ids.get(&td) {
            return Ok(id);
        }
        let id = TypeId(self.types.len() as u32);
        self.types.push(td.clone());
        self.type_ids.insert(td, id);
        Ok(id)
    }

    pub fn type_descriptor(&self, id: TypeId) -> &TypeDescriptor {
        &self.types[id.0 as usize]
    }

    /// Chunks an object of `byte_size` bytes occupies.
    pub fn object_chunks(&self, byte_size: usize) -> usize {
        if byte_size <= self.config.normal_payload_bytes {
            1
        } else {
            byte_size.div_ceil(self.config.normal_payload_bytes)
        }
    }

    /// Fresh chunks are black while marking and ahead of the sweep cursor,
    /// so the running cycle cannot free them.
    pub(crate) fn alloc_mark(&self, idx: ChunkIndex) -> bool {
        match self.gc.phase {
            Phase::Idle => false,
            Phase::Marking => true,
            Phase::Sweeping => match idx.region {
                Region::Objects => idx.idx() >= self.gc.sweep_pos[0],
                Region::Arrays => idx.idx() >= self.gc.sweep_pos[1],
                Region::Stacks => false,
            },
        }
    }

    /// Pops a chunk and applies the allocation color.
    pub(crate) fn take_chunk(&mut self, region: Region, kind: ChunkKind) -> ChunkIndex {
        let idx = self
            .store_mut(region)
            .pop(kind, false)
            .expect("caller checked the free count");
        let mark = self.alloc_mark(idx);
        self.store_mut(region).meta[idx.idx()].mark = mark;
        idx
    }

    pub fn alloc_object(&mut self, ty: TypeId) -> Result<ObjectHandle> {
        let size = self
            .types
            .get(ty.0 as usize)
            .ok_or_else(|| HeapError::InvalidType(format!("unknown type id {}", ty.0)))?
            .byte_size;
        let needed = self.object_chunks(size);
        if needed > self.config.max_chunks_per_object {
            return Err(HeapError::ObjectTooLarge {
                size,
                max: self.config.max_object_bytes(),
            });
        }
        if !self.reserve(Region::Objects, needed) {
            return Err(HeapError::OutOfChunks {
                region: Region::Objects,
                needed,
                available: self.free_count(Region::Objects),
            });
        }
        let first = self.take_chunk(Region::Objects, ChunkKind::ObjectFirst);
        self.obj_slots[first.idx()] = ObjSlot::First(ty);
        if needed == 2 {
            let cont = self.take_chunk(Region::Objects, ChunkKind::ObjectCont);
            self.obj_slots[cont.idx()] = ObjSlot::Cont { first: first.slot };
            let m = &mut self.objects.meta[first.idx()];
            m.cont = Some(cont);
            m.co = self.config.normal_payload_bytes as u16;
        }
        let c = &mut self.counters;
        c.objects_allocated += 1;
        c.last_alloc_chunks = needed;
        c.max_object_chunks = c.max_object_chunks.max(needed);
        Ok(ObjectHandle {
            first,
            type_id: ty,
        })
    }

    fn check_object(&self, h: &ObjectHandle) -> Result<&TypeDescriptor> {
        match self.obj_slots.get(h.first.idx()) {
            Some(ObjSlot::First(t)) if *t == h.type_id && h.first.region == Region::Objects => {
                Ok(self.type_descriptor(*t))
            }
            _ => Err(HeapError::StaleHandle(h.first)),
        }
    }

    pub fn object_size(&self, h: &ObjectHandle) -> Result<usize> {
        Ok(self.check_object(h)?.byte_size)
    }

    /// Maps a byte offset of an object to the chunk and intra-chunk offset
    /// holding it.
    pub fn resolve_field(&self, h: &ObjectHandle, offset: usize) -> Result<(ChunkIndex, usize)> {
        let size = self.check_object(h)?.byte_size;
        if offset >= size {
            return Err(HeapError::OffsetOutOfBounds { offset, size });
        }
        let meta = &self.objects.meta[h.first.idx()];
        match meta.cont {
            Some(cont) if offset >= meta.co as usize => Ok((cont, offset - meta.co as usize)),
            _ => Ok((h.first, offset)),
        }
    }

    fn field_bytes(&self, h: &ObjectHandle, offset: usize, width: usize) -> Result<&[u8]> {
        self.resolve_field(h, offset + width - 1)?;
        let (idx, intra) = self.resolve_field(h, offset)?;
        Ok(&self.objects.payload(idx)[intra..intra + width])
    }

    fn field_bytes_mut(&mut self, h: &ObjectHandle, offset: usize, width: usize) -> Result<&mut [u8]> {
        self.resolve_field(h, offset + width - 1)?;
        let (idx, intra) = self.resolve_field(h, offset)?;
        Ok(&mut self.objects.payload_mut(idx)[intra..intra + width])
    }

    pub fn read_byte(&self, h: &ObjectHandle, offset: usize) -> Result<u8> {
        Ok(self.field_bytes(h, offset, 1)?[0])
    }

    /// Raw byte store. Bypasses ref-slot typing; meant for layout tests.
    pub fn write_byte(&mut self, h: &ObjectHandle, offset: usize, b: u8) -> Result<()> {
        self.field_bytes_mut(h, offset, 1)?[0] = b;
        Ok(())
    }

    fn check_word_slot(&self, td: &TypeDescriptor, offset: usize) -> Result<()> {
        if !offset.is_multiple_of(WORD_BYTES) {
            return Err(HeapError::TypeMismatch("word fields are 4-byte aligned"));
        }
        if offset + WORD_BYTES > td.byte_size {
            return Err(HeapError::OffsetOutOfBounds {
                offset,
                size: td.byte_size,
            });
        }
        if td.word_overlaps_ref(offset) {
            return Err(HeapError::TypeMismatch("word access to a reference slot"));
        }
        Ok(())
    }

    pub fn read_field(&self, h: &ObjectHandle, offset: usize) -> Result<Value> {
        let td = self.check_object(h)?;
        if td.is_ref_slot(offset) {
            let raw = read_le(self.field_bytes(h, offset, HANDLE_BYTES)?);
            return Ok(Value::Ref(self.decode_ref(raw)?));
        }
        self.check_word_slot(td, offset)?;
        Ok(Value::Word(read_le(self.field_bytes(h, offset, WORD_BYTES)?)))
    }

    pub fn write_field(&mut self, h: &ObjectHandle, offset: usize, value: Value) -> Result<()> {
        let td = self.check_object(h)?;
        let is_ref = td.is_ref_slot(offset);
        match value {
            Value::Ref(new) => {
                if !is_ref {
                    return Err(HeapError::TypeMismatch("handle written to a word field"));
                }
                if offset >= td.byte_size {
                    return Err(HeapError::OffsetOutOfBounds {
                        offset,
                        size: td.byte_size,
                    });
                }
                if let Some(n) = &new {
                    self.check_handle(n)?;
                }
                let raw = read_le(self.field_bytes(h, offset, HANDLE_BYTES)?);
                self.log_overwrite(raw)?;
                let slot = self.field_bytes_mut(h, offset, HANDLE_BYTES)?;
                write_le(slot, encode_ref(new))
            }
            Value::Word(w) => {
                if is_ref {
                    return Err(HeapError::TypeMismatch("word written to a reference slot"));
                }
                self.check_word_slot(td, offset)?;
                write_le(self.field_bytes_mut(h, offset, WORD_BYTES)?, w)
            }
        }
    }

    /// Deletion barrier: while marking, remember the value a ref store is
    /// about to destroy.
    pub(crate) fn log_overwrite(&mut self, old_raw: u64) -> Result<()> {
        if self.gc.phase == Phase::Marking {
            if let Some(old) = self.decode_ref(old_raw)? {
                self.gc.satb_log.push(old);
                self.counters.barrier_records += 1;
            }
        }
        Ok(())
    }

    /// Rebuilds a handle from its in-payload encoding.
    pub(crate) fn decode_ref(&self, raw: u64) -> Result<Option<Handle>> {
        let Some(head) = decode_ref_head(raw) else {
            return Ok(None);
        };
        match head.region {
            Region::Objects => match self.obj_slots.get(head.idx()) {
                Some(ObjSlot::First(t)) => Ok(Some(Handle::Object(ObjectHandle {
                    first: head,
                    type_id: *t,
                }))),
                _ => Err(HeapError::StaleHandle(head)),
            },
            _ => match self.headers.get(head.idx()).copied().flatten() {
                Some(hd) => Ok(Some(Handle::Array(ArrayHandle {
                    first_leaf: head,
                    length: hd.length,
                    elem: hd.elem,
                }))),
                None => Err(HeapError::StaleHandle(head)),
            },
        }
    }

    /// Confirms a handle still names a live value of the recorded shape.
    pub fn check_handle(&self, h: &Handle) -> Result<()> {
        match h {
            Handle::Object(o) => self.check_object(o).map(|_| ()),
            Handle::Array(a) => self.check_array(a).map(|_| ()),
        }
    }

    pub(crate) fn check_array(&self, a: &ArrayHandle) -> Result<ArrayHeader> {
        if a.first_leaf.region != Region::Arrays {
            return Err(HeapError::StaleHandle(a.first_leaf));
        }
        match self.headers.get(a.first_leaf.idx()).copied().flatten() {
            Some(hd) if hd.length == a.length && hd.elem == a.elem => Ok(hd),
            _ => Err(HeapError::StaleHandle(a.first_leaf)),
        }
    }

    /// Returns a chunk of a collected region to its free list and clears
    /// the side tables that referred to it.
    pub(crate) fn free_chunk(&mut self, idx: ChunkIndex) {
        match idx.region {
            Region::Objects => self.obj_slots[idx.idx()] = ObjSlot::Unused,
            Region::Arrays => {
                self.leaves[idx.idx()] = LeafInfo::default();
                self.headers[idx.idx()] = None;
            }
            Region::Stacks => self.frames[idx.idx()] = None,
        }
        self.store_mut(idx.region).release(idx);
    }

    /// Full consistency audit: free chains, counters, chunk kinds, links.
    pub fn check_invariants(&self) -> Result<(), String> {
        for r in [Region::Objects, Region::Arrays, Region::Stacks] {
            self.store(r).audit()?;
        }
        for (slot, m) in self.objects.meta.iter().enumerate() {
            let info = self.obj_slots[slot];
            match (m.kind, info) {
                (ChunkKind::Free, ObjSlot::Unused) => {}
                (ChunkKind::ObjectFirst, ObjSlot::First(_)) => {
                    if let Some(c) = m.cont {
                        let cm = self.chunk_meta(c);
                        if cm.kind != ChunkKind::ObjectCont
                            || m.co as usize > self.config.normal_payload_bytes
                        {
                            return Err(format!("o{slot}: bad continuation {c:?}"));
                        }
                    }
                }
                (ChunkKind::ObjectCont, ObjSlot::Cont { .. }) => {
                    if m.cont.is_some() {
                        return Err(format!("o{slot}: continuation chunk has its own cont"));
                    }
                }
                (k, i) => return Err(format!("o{slot}: kind {k:?} with slot info {i:?}")),
            }
        }
        if self.gc.phase == Phase::Idle {
            for r in Region::COLLECTED {
                if let Some(slot) = self.store(r).meta.iter().position(|m| m.mark) {
                    return Err(format!("{r:?} slot {slot} marked outside a cycle"));
                }
            }
        }
        Ok(())
    }
}

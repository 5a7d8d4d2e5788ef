use std::fmt;

/// The three heap regions. Objects and arrays are free-list managed and
/// swept; stacks are owned by threads and never swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Objects,
    Arrays,
    Stacks,
}

impl Region {
    /// The two collected regions, in sweep order.
    pub const COLLECTED: [Region; 2] = [Region::Objects, Region::Arrays];
}

/// Stable identity of one chunk. Stands in for a machine address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkIndex {
    pub region: Region,
    pub slot: u32,
}

impl ChunkIndex {
    pub const fn new(region: Region, slot: u32) -> Self {
        Self { region, slot }
    }

    pub(crate) fn idx(self) -> usize {
        self.slot as usize
    }
}

impl fmt::Debug for ChunkIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.region {
            Region::Objects => 'o',
            Region::Arrays => 'a',
            Region::Stacks => 's',
        };
        write!(f, "{r}{}", self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChunkKind {
    Free,
    ObjectFirst,
    ObjectCont,
    ArrayLeaf,
    ArrayInternal,
    StackFrame,
}

/// Per-chunk management record, kept in a side table indexed by slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkMeta {
    pub kind: ChunkKind,
    pub mark: bool,
    /// Second chunk of a split object, or next chunk of a multi-chunk internal node.
    pub cont: Option<ChunkIndex>,
    /// Smallest field offset that lives in `cont`. Only meaningful for split objects.
    pub co: u16,
    pub free_link: Option<ChunkIndex>,
}

impl ChunkMeta {
    pub(crate) const FREE: ChunkMeta = ChunkMeta {
        kind: ChunkKind::Free,
        mark: false,
        cont: None,
        co: 0,
        free_link: None,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FreeList {
    pub head: Option<ChunkIndex>,
    pub count: usize,
}

/// Storage for one region: metadata, raw payload bytes and the free list.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RegionStore {
    pub region: Region,
    pub meta: Vec<ChunkMeta>,
    pub payload: Vec<u8>,
    pub chunk_bytes: usize,
    pub free: FreeList,
    pub allocated: usize,
}

impl RegionStore {
    pub fn new(region: Region, capacity: usize, chunk_bytes: usize) -> Self {
        let mut store = Self {
            region,
            meta: vec![ChunkMeta::FREE; capacity],
            payload: vec![0; capacity * chunk_bytes],
            chunk_bytes,
            free: FreeList::default(),
            allocated: 0,
        };
        // Push in reverse so that the first pops hand out ascending slots.
        for slot in (0..capacity).rev() {
            store.push_free(ChunkIndex::new(region, slot as u32));
        }
        store
    }

    pub fn capacity(&self) -> usize {
        self.meta.len()
    }

    fn push_free(&mut self, idx: ChunkIndex) {
        let m = &mut self.meta[idx.idx()];
        *m = ChunkMeta {
            free_link: self.free.head,
            ..ChunkMeta::FREE
        };
        self.free.head = Some(idx);
        self.free.count += 1;
    }

    /// LIFO pop. The chunk comes back zeroed and tagged with `kind`.
    pub fn pop(&mut self, kind: ChunkKind, mark: bool) -> Option<ChunkIndex> {
        let idx = self.free.head?;
        let m = &mut self.meta[idx.idx()];
        debug_assert_eq!(m.kind, ChunkKind::Free);
        self.free.head = m.free_link;
        self.free.count -= 1;
        *m = ChunkMeta {
            kind,
            mark,
            ..ChunkMeta::FREE
        };
        self.allocated += 1;
        self.payload_mut(idx).fill(0);
        Some(idx)
    }

    pub fn release(&mut self, idx: ChunkIndex) {
        debug_assert_ne!(self.meta[idx.idx()].kind, ChunkKind::Free);
        self.allocated -= 1;
        self.push_free(idx);
    }

    pub fn payload(&self, idx: ChunkIndex) -> &[u8] {
        let start = idx.idx() * self.chunk_bytes;
        &self.payload[start..start + self.chunk_bytes]
    }

    pub fn payload_mut(&mut self, idx: ChunkIndex) -> &mut [u8] {
        let start = idx.idx() * self.chunk_bytes;
        &mut self.payload[start..start + self.chunk_bytes]
    }

    /// Walks the free chain and checks it against the counters and kinds.
    pub fn audit(&self) -> Result<(), String> {
        let mut seen = vec![false; self.capacity()];
        let mut n = 0;
        let mut cur = self.free.head;
        while let Some(idx) = cur {
            if idx.region != self.region {
                return Err(format!("{idx:?} chained into {:?} free list", self.region));
            }
            if seen[idx.idx()] {
                return Err(format!("{idx:?} appears twice on the free list"));
            }
            seen[idx.idx()] = true;
            if self.meta[idx.idx()].kind != ChunkKind::Free {
                return Err(format!("{idx:?} on free list but not Free"));
            }
            n += 1;
            cur = self.meta[idx.idx()].free_link;
        }
        if n != self.free.count {
            return Err(format!(
                "{:?}: free chain has {n} chunks, counter says {}",
                self.region, self.free.count
            ));
        }
        let non_free = self.meta.iter().filter(|m| m.kind != ChunkKind::Free).count();
        if non_free != self.allocated {
            return Err(format!(
                "{:?}: {non_free} allocated chunks, counter says {}",
                self.region, self.allocated
            ));
        }
        if self.free.count + self.allocated != self.capacity() {
            return Err(format!("{:?}: free + allocated != capacity", self.region));
        }
        Ok(())
    }
}

//! Moving baseline: bump allocation in a nursery, Cheney copying into the old
//! generation, full copies into a secondary extent, and a sliding
//! mark-compact fallback once live data passes the usage threshold.
//!
//! Objects are named by stable [`ObjId`]s and located through an
//! [`IndirectionTable`], so every move is visible and counted. Bodies are kept
//! per id; only their placement is simulated byte for byte.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::heap::ElemKind;

pub const ALIGN: usize = 8;
/// Bytes per work unit when allocating or copying.
pub const BYTES_PER_WORK_UNIT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(String),
    #[error("zero-byte allocation")]
    ZeroSize,
    #[error("out of memory: {needed} bytes needed, {available} available")]
    OutOfMemory { needed: usize, available: usize },
    #[error("unknown object {0:?}")]
    UnknownObject(ObjId),
    #[error("offset or index {key} is not a valid {what} slot")]
    BadSlot { key: usize, what: &'static str },
}

pub type BResult<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub u64);

/// Which extent an object lives in. The two old semispaces alternate on each
/// major copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    Nursery,
    Old(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    pub space: Space,
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndirectionTable {
    map: BTreeMap<ObjId, Location>,
}

impl IndirectionTable {
    pub fn get(&self, id: ObjId) -> Option<Location> {
        self.map.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjId, Location)> + '_ {
        self.map.iter().map(|(&k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Extent {
    pub size: usize,
    pub cursor: usize,
}

impl Extent {
    fn fits(&self, bytes: usize) -> bool {
        self.cursor + bytes <= self.size
    }

    pub fn free(&self) -> usize {
        self.size - self.cursor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub heap_bytes: usize,
    pub nursery_fraction: f64,
    pub usage_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            heap_bytes: 1 << 20,
            nursery_fraction: 0.25,
            usage_threshold: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn with_heap_bytes(heap_bytes: usize) -> Self {
        Self {
            heap_bytes,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    /// Byte-addressed fields; the listed offsets hold references.
    Object { ref_offsets: Vec<usize> },
    /// Index-addressed elements.
    Array { elem: ElemKind, len: usize },
}

impl Shape {
    pub fn plain() -> Self {
        Shape::Object {
            ref_offsets: Vec::new(),
        }
    }

    fn in_bounds(&self, key: usize, size: usize) -> bool {
        match self {
            Shape::Object { .. } => key < size,
            Shape::Array { len, .. } => key < *len,
        }
    }

    fn is_ref_slot(&self, key: usize) -> bool {
        match self {
            Shape::Object { ref_offsets } => ref_offsets.contains(&key),
            Shape::Array { elem, len } => *elem == ElemKind::Ref && key < *len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Body {
    size: usize,
    shape: Shape,
    words: BTreeMap<usize, u64>,
    refs: BTreeMap<usize, ObjId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectionKind {
    Minor,
    MajorCopy,
    MarkCompact,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub objects_moved: u64,
    pub bytes_copied: u64,
    pub objects_scanned: u64,
    pub work_units: u64,
    /// Work units of each collection folded into these stats, in order.
    pub pause_work: Vec<u64>,
}

impl MoveStats {
    pub fn absorb(&mut self, other: &MoveStats) {
        self.objects_moved += other.objects_moved;
        self.bytes_copied += other.bytes_copied;
        self.objects_scanned += other.objects_scanned;
        self.work_units += other.work_units;
        self.pause_work.extend_from_slice(&other.pause_work);
    }

    fn seal(mut self) -> Self {
        self.work_units = work_for_bytes(self.bytes_copied as usize) + self.objects_scanned;
        self.pause_work = vec![self.work_units];
        self
    }
}

/// Outcome of one allocation, including any collections it set off.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocReport {
    pub id: ObjId,
    pub location: Location,
    pub work_units: u64,
    pub moves: MoveStats,
}

pub fn align_up(bytes: usize) -> usize {
    bytes.div_ceil(ALIGN) * ALIGN
}

fn work_for_bytes(bytes: usize) -> u64 {
    bytes.div_ceil(BYTES_PER_WORK_UNIT) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemispaceHeap {
    config: BaselineConfig,
    nursery: Extent,
    old: Extent,
    old_half: u8,
    secondary: Option<Extent>,
    table: IndirectionTable,
    bodies: BTreeMap<ObjId, Body>,
    next_id: u64,
    collections: Vec<CollectionKind>,
    totals: MoveStats,
}

impl SemispaceHeap {
    pub fn new(config: BaselineConfig) -> BResult<Self> {
        if !(0.0 < config.nursery_fraction && config.nursery_fraction < 1.0) {
            return Err(BaselineError::InvalidConfig("nursery fraction must be in (0, 1)".into()));
        }
        if !(0.0 < config.usage_threshold && config.usage_threshold <= 1.0) {
            return Err(BaselineError::InvalidConfig("usage threshold must be in (0, 1]".into()));
        }
        let nursery = align_up((config.heap_bytes as f64 * config.nursery_fraction) as usize);
        if nursery == 0 || nursery >= config.heap_bytes {
            return Err(BaselineError::InvalidConfig(format!(
                "heap of {} bytes is too small",
                config.heap_bytes
            )));
        }
        Ok(Self {
            config,
            nursery: Extent {
                size: nursery,
                cursor: 0,
            },
            old: Extent {
                size: config.heap_bytes - nursery,
                cursor: 0,
            },
            old_half: 0,
            secondary: None,
            table: IndirectionTable::default(),
            bodies: BTreeMap::new(),
            next_id: 0,
            collections: Vec::new(),
            totals: MoveStats::default(),
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn nursery(&self) -> Extent {
        self.nursery
    }

    pub fn old_gen(&self) -> Extent {
        self.old
    }

    /// Extent holding survivors mid-copy; present only inside a major copy.
    pub fn secondary(&self) -> Option<Extent> {
        self.secondary
    }

    pub fn table(&self) -> &IndirectionTable {
        &self.table
    }

    pub fn location(&self, id: ObjId) -> Option<Location> {
        self.table.get(id)
    }

    pub fn object_count(&self) -> usize {
        self.bodies.len()
    }

    pub fn size_of(&self, id: ObjId) -> BResult<usize> {
        Ok(self.body(id)?.size)
    }

    pub fn collections(&self) -> &[CollectionKind] {
        &self.collections
    }

    pub fn count(&self, kind: CollectionKind) -> usize {
        self.collections.iter().filter(|&&k| k == kind).count()
    }

    pub fn totals(&self) -> &MoveStats {
        &self.totals
    }

    /// Occupied fraction of the old generation.
    pub fn usage(&self) -> f64 {
        self.old.cursor as f64 / self.old.size as f64
    }

    fn body(&self, id: ObjId) -> BResult<&Body> {
        self.bodies.get(&id).ok_or(BaselineError::UnknownObject(id))
    }

    fn body_mut(&mut self, id: ObjId) -> BResult<&mut Body> {
        self.bodies.get_mut(&id).ok_or(BaselineError::UnknownObject(id))
    }

    fn slot(&self, id: ObjId, key: usize, is_ref: bool) -> BResult<&Body> {
        let b = self.body(id)?;
        if !b.shape.in_bounds(key, b.size) || b.shape.is_ref_slot(key) != is_ref {
            let what = if is_ref { "ref" } else { "word" };
            return Err(BaselineError::BadSlot { key, what });
        }
        Ok(b)
    }

    /// Allocates `size` bytes. Small objects go to the nursery, collecting it
    /// first when full; objects larger than the nursery go straight to the old
    /// generation.
    pub fn b_alloc(&mut self, roots: &[ObjId], size: usize, shape: Shape) -> BResult<AllocReport> {
        if size == 0 {
            return Err(BaselineError::ZeroSize);
        }
        let bytes = align_up(size);
        let mut moves = MoveStats::default();
        let location = if bytes > self.nursery.size {
            if !self.old.fits(bytes) {
                moves.absorb(&self.major_collect(roots)?);
            }
            if !self.old.fits(bytes) {
                return Err(BaselineError::OutOfMemory {
                    needed: bytes,
                    available: self.old.free(),
                });
            }
            self.bump_old(bytes)
        } else {
            if !self.nursery.fits(bytes) {
                moves.absorb(&self.minor_collect(roots)?);
            }
            let offset = self.nursery.cursor;
            self.nursery.cursor += bytes;
            Location {
                space: Space::Nursery,
                offset,
            }
        };
        let id = ObjId(self.next_id);
        self.next_id += 1;
        self.table.map.insert(id, location);
        self.bodies.insert(
            id,
            Body {
                size: bytes,
                shape,
                words: BTreeMap::new(),
                refs: BTreeMap::new(),
            },
        );
        Ok(AllocReport {
            id,
            location,
            work_units: work_for_bytes(bytes) + moves.work_units,
            moves,
        })
    }

    fn bump_old(&mut self, bytes: usize) -> Location {
        let offset = self.old.cursor;
        self.old.cursor += bytes;
        Location {
            space: Space::Old(self.old_half),
            offset,
        }
    }

    pub fn write_word(&mut self, id: ObjId, key: usize, value: u64) -> BResult<()> {
        self.slot(id, key, false)?;
        self.body_mut(id)?.words.insert(key, value);
        Ok(())
    }

    pub fn read_word(&self, id: ObjId, key: usize) -> BResult<u64> {
        Ok(self.slot(id, key, false)?.words.get(&key).copied().unwrap_or(0))
    }

    pub fn write_ref(&mut self, id: ObjId, key: usize, target: Option<ObjId>) -> BResult<()> {
        if let Some(t) = target {
            self.body(t)?;
        }
        self.slot(id, key, true)?;
        let b = self.body_mut(id)?;
        match target {
            Some(t) => b.refs.insert(key, t),
            None => b.refs.remove(&key),
        };
        Ok(())
    }

    pub fn read_ref(&self, id: ObjId, key: usize) -> BResult<Option<ObjId>> {
        Ok(self.slot(id, key, true)?.refs.get(&key).copied())
    }

    /// Live objects in breadth-first order from `roots`, the order a Cheney
    /// scan visits them.
    pub fn trace(&self, roots: &[ObjId]) -> Vec<ObjId> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut queue: VecDeque<ObjId> = VecDeque::new();
        for &r in roots {
            if self.bodies.contains_key(&r) && seen.insert(r) {
                queue.push_back(r);
            }
        }
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for &c in self.bodies[&id].refs.values() {
                if self.bodies.contains_key(&c) && seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        order
    }

    fn drop_unreached(&mut self, live: &[ObjId]) {
        let keep: BTreeSet<ObjId> = live.iter().copied().collect();
        self.bodies.retain(|id, _| keep.contains(id));
        self.table.map.retain(|id, _| keep.contains(id));
    }

    fn in_nursery(&self, id: ObjId) -> bool {
        self.table.map[&id].space == Space::Nursery
    }

    fn live_bytes(&self, ids: &[ObjId]) -> usize {
        ids.iter().map(|id| self.bodies[id].size).sum()
    }

    /// Copies live nursery objects to the old generation's frontier. Falls
    /// through to a major collection when the frontier cannot hold them.
    pub fn minor_collect(&mut self, roots: &[ObjId]) -> BResult<MoveStats> {
        let live = self.trace(roots);
        let survivors: Vec<ObjId> = live.iter().copied().filter(|&id| self.in_nursery(id)).collect();
        if self.live_bytes(&survivors) > self.old.free() {
            return self.major_collect(roots);
        }
        let mut stats = MoveStats {
            objects_scanned: survivors.len() as u64,
            ..MoveStats::default()
        };
        for id in survivors {
            let size = self.bodies[&id].size;
            let loc = self.bump_old(size);
            self.table.map.insert(id, loc);
            stats.objects_moved += 1;
            stats.bytes_copied += size as u64;
        }
        // Old objects are kept regardless; only nursery garbage dies here.
        let dead: Vec<ObjId> = self
            .table
            .iter()
            .filter(|&(_, loc)| loc.space == Space::Nursery)
            .map(|(id, _)| id)
            .collect();
        for id in dead {
            self.bodies.remove(&id);
            self.table.map.remove(&id);
        }
        self.nursery.cursor = 0;
        self.collections.push(CollectionKind::Minor);
        let stats = stats.seal();
        self.totals.absorb(&stats);
        Ok(stats)
    }

    /// Whole-heap collection. Copies every survivor into a fresh extent and
    /// swaps it in, unless live data exceeds the usage threshold, in which
    /// case it compacts in place instead.
    pub fn major_collect(&mut self, roots: &[ObjId]) -> BResult<MoveStats> {
        let live = self.trace(roots);
        let bytes = self.live_bytes(&live);
        if bytes as f64 > self.config.usage_threshold * self.old.size as f64 {
            return self.mark_compact(roots);
        }
        let half = 1 - self.old_half;
        let mut to = Extent {
            size: self.old.size,
            cursor: 0,
        };
        let mut stats = MoveStats {
            objects_scanned: live.len() as u64,
            ..MoveStats::default()
        };
        for &id in &live {
            let size = self.bodies[&id].size;
            self.table.map.insert(
                id,
                Location {
                    space: Space::Old(half),
                    offset: to.cursor,
                },
            );
            to.cursor += size;
            stats.objects_moved += 1;
            stats.bytes_copied += size as u64;
        }
        self.secondary = Some(to);
        self.drop_unreached(&live);
        self.old = self.secondary.take().expect("set above");
        self.old_half = half;
        self.nursery.cursor = 0;
        self.collections.push(CollectionKind::MajorCopy);
        let stats = stats.seal();
        self.totals.absorb(&stats);
        Ok(stats)
    }

    /// Slides old-generation survivors toward the base in address order, then
    /// promotes nursery survivors behind them in scan order.
    pub fn mark_compact(&mut self, roots: &[ObjId]) -> BResult<MoveStats> {
        let live = self.trace(roots);
        let bytes = self.live_bytes(&live);
        if bytes > self.old.size {
            return Err(BaselineError::OutOfMemory {
                needed: bytes,
                available: self.old.size,
            });
        }
        let (mut old, young): (Vec<ObjId>, Vec<ObjId>) =
            live.iter().copied().partition(|&id| !self.in_nursery(id));
        old.sort_by_key(|id| self.table.map[id].offset);
        let mut stats = MoveStats {
            objects_scanned: live.len() as u64,
            ..MoveStats::default()
        };
        let mut cursor = 0;
        for id in old.into_iter().chain(young) {
            let size = self.bodies[&id].size;
            let to = Location {
                space: Space::Old(self.old_half),
                offset: cursor,
            };
            if self.table.map[&id] != to {
                self.table.map.insert(id, to);
                stats.objects_moved += 1;
                stats.bytes_copied += size as u64;
            }
            cursor += size;
        }
        self.drop_unreached(&live);
        self.old.cursor = cursor;
        self.nursery.cursor = 0;
        self.collections.push(CollectionKind::MarkCompact);
        let stats = stats.seal();
        self.totals.absorb(&stats);
        Ok(stats)
    }

    /// Layout check: each space's objects tile `[0, cursor)` without overlap.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.table.len() != self.bodies.len() {
            return Err("indirection table and bodies disagree".into());
        }
        let mut by_space: BTreeMap<Space, Vec<(usize, usize)>> = BTreeMap::new();
        for (id, loc) in self.table.iter() {
            let size = self.bodies.get(&id).ok_or("table entry without body")?.size;
            by_space.entry(loc.space).or_default().push((loc.offset, size));
        }
        for (space, mut spans) in by_space {
            let ext = match space {
                Space::Nursery => self.nursery,
                Space::Old(h) if h == self.old_half => self.old,
                Space::Old(_) => return Err("object left in the inactive semispace".into()),
            };
            spans.sort_unstable();
            let mut end = 0;
            for (off, size) in spans {
                if off < end {
                    return Err(format!("overlap at {off} in {space:?}"));
                }
                end = off + size;
            }
            if end > ext.cursor || ext.cursor > ext.size {
                return Err(format!("{space:?} cursor {} out of range", ext.cursor));
            }
        }
        Ok(())
    }
}

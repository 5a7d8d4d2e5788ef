use super::chunk::{ChunkIndex, Region};
use super::config::{HANDLE_BYTES, WORD_BYTES};
use crate::error::{HeapError, Result};

/// Index into the heap's type registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u32);

/// Object layout: byte size plus the offsets of reference fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeDescriptor {
    pub byte_size: usize,
    pub ref_offsets: Vec<usize>,
}

impl TypeDescriptor {
    pub fn new(byte_size: usize, ref_offsets: impl Into<Vec<usize>>) -> Self {
        let mut ref_offsets = ref_offsets.into();
        ref_offsets.sort_unstable();
        Self {
            byte_size,
            ref_offsets,
        }
    }

    /// A scalar-only object.
    pub fn plain(byte_size: usize) -> Self {
        Self::new(byte_size, Vec::new())
    }

    pub(crate) fn validate(&self, max_object_bytes: usize) -> Result<()> {
        if self.byte_size > max_object_bytes {
            return Err(HeapError::ObjectTooLarge {
                size: self.byte_size,
                max: max_object_bytes,
            });
        }
        for w in self.ref_offsets.windows(2) {
            if w[0] == w[1] {
                return Err(HeapError::InvalidType(format!("duplicate ref offset {}", w[0])));
            }
        }
        for &o in &self.ref_offsets {
            // Aligned slots never straddle a chunk boundary because payloads
            // are multiples of the handle width.
            if o % HANDLE_BYTES != 0 || o + HANDLE_BYTES > self.byte_size {
                return Err(HeapError::InvalidType(format!(
                    "ref offset {o} is unaligned or exceeds size {}",
                    self.byte_size
                )));
            }
        }
        Ok(())
    }

    pub fn is_ref_slot(&self, offset: usize) -> bool {
        self.ref_offsets.binary_search(&offset).is_ok()
    }

    /// True when `[offset, offset + WORD_BYTES)` overlaps any reference slot.
    pub(crate) fn word_overlaps_ref(&self, offset: usize) -> bool {
        self.ref_offsets
            .iter()
            .any(|&r| offset < r + HANDLE_BYTES && r < offset + WORD_BYTES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectHandle {
    pub first: ChunkIndex,
    pub type_id: TypeId,
}

/// Element representation of a tree array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElemKind {
    /// Raw bytes of the given width.
    Data(u16),
    /// Object or array handles.
    Ref,
}

impl ElemKind {
    pub fn size(self) -> usize {
        match self {
            ElemKind::Data(n) => n as usize,
            ElemKind::Ref => HANDLE_BYTES,
        }
    }
}

/// An array is identified by its first leaf, which never moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayHandle {
    pub first_leaf: ChunkIndex,
    pub length: usize,
    pub elem: ElemKind,
}

impl ArrayHandle {
    pub fn elem_size(&self) -> usize {
        self.elem.size()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Handle {
    Object(ObjectHandle),
    Array(ArrayHandle),
}

impl Handle {
    /// The chunk whose mark stands for the whole value during tracing.
    pub fn head(&self) -> ChunkIndex {
        match self {
            Handle::Object(o) => o.first,
            Handle::Array(a) => a.first_leaf,
        }
    }
}

impl From<ObjectHandle> for Handle {
    fn from(h: ObjectHandle) -> Self {
        Handle::Object(h)
    }
}

impl From<ArrayHandle> for Handle {
    fn from(h: ArrayHandle) -> Self {
        Handle::Array(h)
    }
}

/// A field or element value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Word(u64),
    Ref(Option<Handle>),
}

impl Value {
    pub fn as_word(&self) -> Option<u64> {
        match self {
            Value::Word(w) => Some(*w),
            Value::Ref(_) => None,
        }
    }

    pub fn as_ref(&self) -> Option<Handle> {
        match self {
            Value::Ref(h) => *h,
            Value::Word(_) => None,
        }
    }
}

const TAG_SHIFT: u32 = 62;
const TAG_OBJECT: u64 = 1;
const TAG_ARRAY: u64 = 2;

/// In-payload encoding of a reference slot: two tag bits and the head slot.
/// Zero is null, so zeroed payloads hold null references.
pub(crate) fn encode_ref(h: Option<Handle>) -> u64 {
    match h {
        None => 0,
        Some(Handle::Object(o)) => (TAG_OBJECT << TAG_SHIFT) | o.first.slot as u64,
        Some(Handle::Array(a)) => (TAG_ARRAY << TAG_SHIFT) | a.first_leaf.slot as u64,
    }
}

/// Inverse of [`encode_ref`], up to looking the head chunk up in the heap.
pub(crate) fn decode_ref_head(raw: u64) -> Option<ChunkIndex> {
    let slot = (raw & u32::MAX as u64) as u32;
    match raw >> TAG_SHIFT {
        0 => None,
        TAG_OBJECT => Some(ChunkIndex::new(Region::Objects, slot)),
        _ => Some(ChunkIndex::new(Region::Arrays, slot)),
    }
}

pub(crate) fn read_le(bytes: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    buf[..bytes.len()].copy_from_slice(bytes);
    u64::from_le_bytes(buf)
}

pub(crate) fn write_le(bytes: &mut [u8], value: u64) -> Result<()> {
    let width = bytes.len();
    if width < 8 && value >> (width * 8) != 0 {
        return Err(HeapError::ValueTooWide { value, width });
    }
    bytes.copy_from_slice(&value.to_le_bytes()[..width]);
    Ok(())
}

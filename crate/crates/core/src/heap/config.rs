use crate::error::{HeapError, Result};

/// Width of a reference slot (object or array handle) in bytes.
pub const HANDLE_BYTES: usize = 8;
/// Width of a scalar object field in bytes.
pub const WORD_BYTES: usize = 4;

/// Sizing of the three heap regions and of the chunks inside them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapConfig {
    /// Payload carried by one object-region chunk.
    pub normal_payload_bytes: usize,
    /// Bookkeeping cost per chunk. Only used for footprint accounting; the
    /// metadata itself lives in a side table.
    pub chunk_overhead_bytes: usize,
    pub max_chunks_per_object: usize,
    /// Payload of an array leaf (and of each chunk of an internal node).
    pub array_leaf_payload_bytes: usize,
    /// Children per internal array node.
    pub fanout: usize,
    pub object_region_chunks: usize,
    pub array_region_chunks: usize,
    pub stack_region_chunks: usize,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            normal_payload_bytes: 32,
            chunk_overhead_bytes: 12,
            max_chunks_per_object: 2,
            array_leaf_payload_bytes: 128,
            fanout: 32,
            object_region_chunks: 4096,
            array_region_chunks: 4096,
            stack_region_chunks: 1024,
        }
    }
}

impl HeapConfig {
    /// Default chunk geometry with the given region capacities.
    pub fn with_capacities(objects: usize, arrays: usize, stacks: usize) -> Self {
        Self {
            object_region_chunks: objects,
            array_region_chunks: arrays,
            stack_region_chunks: stacks,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HeapError::InvalidConfig(msg));
        if self.object_region_chunks == 0
            || self.array_region_chunks == 0
            || self.stack_region_chunks == 0
        {
            return bad("region capacities must be nonzero".into());
        }
        if self.normal_payload_bytes == 0 || !self.normal_payload_bytes.is_multiple_of(HANDLE_BYTES) {
            return bad(format!(
                "object payload {} is not a positive multiple of {HANDLE_BYTES}",
                self.normal_payload_bytes
            ));
        }
        if self.array_leaf_payload_bytes == 0 || !self.array_leaf_payload_bytes.is_multiple_of(HANDLE_BYTES)
        {
            return bad(format!(
                "leaf payload {} is not a positive multiple of {HANDLE_BYTES}",
                self.array_leaf_payload_bytes
            ));
        }
        // A continuation offset is a single boundary, so objects span at most two chunks.
        if !(1..=2).contains(&self.max_chunks_per_object) {
            return bad(format!(
                "max_chunks_per_object must be 1 or 2, got {}",
                self.max_chunks_per_object
            ));
        }
        if self.fanout < 2 {
            return bad(format!("fanout must exceed 1, got {}", self.fanout));
        }
        if self.normal_payload_bytes > u16::MAX as usize {
            return bad("object payload too large".into());
        }
        let max_slots = u32::MAX as usize;
        if self.object_region_chunks > max_slots
            || self.array_region_chunks > max_slots
            || self.stack_region_chunks > max_slots
        {
            return bad("region capacity exceeds u32 slot range".into());
        }
        Ok(())
    }

    pub fn max_object_bytes(&self) -> usize {
        self.normal_payload_bytes * self.max_chunks_per_object
    }

    /// Child references stored in one array-region chunk of an internal node.
    pub fn children_per_chunk(&self) -> usize {
        self.array_leaf_payload_bytes / HANDLE_BYTES
    }

    /// Array-region chunks consumed by one internal node.
    pub fn internal_node_chunks(&self) -> usize {
        self.fanout.div_ceil(self.children_per_chunk())
    }

    /// Total bytes including per-chunk overhead, for footprint reporting.
    pub fn footprint_bytes(&self) -> usize {
        let per = |payload: usize, n: usize| (payload + self.chunk_overhead_bytes) * n;
        per(self.normal_payload_bytes, self.object_region_chunks)
            + per(self.array_leaf_payload_bytes, self.array_region_chunks)
            + per(self.normal_payload_bytes, self.stack_region_chunks)
    }
}

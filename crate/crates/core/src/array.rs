//! Arrays as fixed-fanout trees of array-region chunks.
//!
//! Element payload lives in leaves of `array_leaf_payload_bytes`; internal
//! nodes hold `fanout` child references. Arrays whose payload fits one leaf
//! (including empty arrays) are a single leaf with no internal nodes. Every
//! leaf records the root and the next payload leaf, so whole-array traversals
//! can follow the leaf chain instead of descending once per element.
//!
//! Elements never straddle leaves: a leaf holds `floor(leaf_payload / elem_size)`
//! elements and the child for a level is `leaf_index / subtree_leaves`.

use crate::error::{HeapError, Result};
use crate::heap::{
    encode_ref, read_le, write_le, ArrayHandle, ArrayHeader, ChunkIndex, ChunkKind, ElemKind,
    Heap, HeapConfig, LeafInfo, Region, Value, HANDLE_BYTES,
};

/// Chunk geometry of an array before it is allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayLayout {
    pub elems_per_leaf: usize,
    pub leaf_count: usize,
    pub internal_nodes: usize,
    pub depth: usize,
    pub total_chunks: usize,
}

/// Smallest `d` with `fanout^d >= leaf_count`.
pub fn tree_depth(leaf_count: usize, fanout: usize) -> usize {
    let mut depth = 0;
    let mut reach = 1usize;
    while reach < leaf_count {
        reach = reach.saturating_mul(fanout);
        depth += 1;
    }
    depth
}

pub fn array_layout(config: &HeapConfig, elem: ElemKind, n: usize) -> Result<ArrayLayout> {
    let size = elem.size();
    let leaf = config.array_leaf_payload_bytes;
    if size > leaf {
        return Err(HeapError::ElemTooLarge {
            elem_size: size,
            leaf,
        });
    }
    if size == 0 && n > 0 {
        return Err(HeapError::ZeroSizedElements { n });
    }
    let elems_per_leaf = leaf.checked_div(size).unwrap_or(0);
    let leaf_count = if n == 0 { 1 } else { n.div_ceil(elems_per_leaf) };
    let mut internal_nodes = 0;
    let mut level = leaf_count;
    while level > 1 {
        level = level.div_ceil(config.fanout);
        internal_nodes += level;
    }
    Ok(ArrayLayout {
        elems_per_leaf,
        leaf_count,
        internal_nodes,
        depth: tree_depth(leaf_count, config.fanout),
        total_chunks: leaf_count + internal_nodes * config.internal_node_chunks(),
    })
}

// Internal-node child entries: 0 is empty, otherwise slot + 1.
fn encode_child(c: ChunkIndex) -> u64 {
    c.slot as u64 + 1
}

fn decode_child(raw: u64) -> Option<ChunkIndex> {
    raw.checked_sub(1)
        .map(|s| ChunkIndex::new(Region::Arrays, s as u32))
}

impl Heap {
    pub fn array_layout(&self, elem: ElemKind, n: usize) -> Result<ArrayLayout> {
        array_layout(&self.config, elem, n)
    }

    pub fn alloc_array(&mut self, elem: ElemKind, n: usize) -> Result<ArrayHandle> {
        let layout = self.array_layout(elem, n)?;
        if !self.reserve(Region::Arrays, layout.total_chunks) {
            return Err(HeapError::OutOfChunks {
                region: Region::Arrays,
                needed: layout.total_chunks,
                available: self.free_count(Region::Arrays),
            });
        }

        let leaves: Vec<ChunkIndex> = (0..layout.leaf_count)
            .map(|_| self.take_chunk(Region::Arrays, ChunkKind::ArrayLeaf))
            .collect();
        let first = leaves[0];

        let mut level = leaves.clone();
        while level.len() > 1 {
            let fanout = self.config.fanout;
            level = level
                .chunks(fanout)
                .map(|group| self.alloc_internal_node(group, first))
                .collect();
        }
        let root = (layout.leaf_count > 1).then(|| level[0]);

        for (i, &leaf) in leaves.iter().enumerate() {
            self.leaves[leaf.idx()] = LeafInfo {
                root,
                next_leaf: leaves.get(i + 1).copied(),
                owner: first.slot,
            };
        }
        self.headers[first.idx()] = Some(ArrayHeader { length: n, elem });
        self.counters.arrays_allocated += 1;
        self.counters.last_alloc_chunks = layout.total_chunks;
        Ok(ArrayHandle {
            first_leaf: first,
            length: n,
            elem,
        })
    }

    fn alloc_internal_node(&mut self, children: &[ChunkIndex], owner: ChunkIndex) -> ChunkIndex {
        let per_chunk = self.config.children_per_chunk();
        let chunks: Vec<ChunkIndex> = (0..self.config.internal_node_chunks())
            .map(|_| self.take_chunk(Region::Arrays, ChunkKind::ArrayInternal))
            .collect();
        for (j, &c) in chunks.iter().enumerate() {
            self.arrays.meta[c.idx()].cont = chunks.get(j + 1).copied();
            self.leaves[c.idx()].owner = owner.slot;
        }
        for (k, &child) in children.iter().enumerate() {
            let chunk = chunks[k / per_chunk];
            let at = (k % per_chunk) * HANDLE_BYTES;
            let payload = self.arrays.payload_mut(chunk);
            payload[at..at + HANDLE_BYTES].copy_from_slice(&encode_child(child).to_le_bytes());
        }
        chunks[0]
    }

    /// Child references stored in one internal-node chunk (not its continuation).
    pub(crate) fn chunk_children(&self, chunk: ChunkIndex) -> impl Iterator<Item = ChunkIndex> + '_ {
        self.arrays
            .payload(chunk)
            .chunks_exact(HANDLE_BYTES)
            .filter_map(|b| decode_child(read_le(b)))
    }

    fn node_child(&self, node: ChunkIndex, k: usize) -> ChunkIndex {
        let per_chunk = self.config.children_per_chunk();
        let mut chunk = node;
        for _ in 0..k / per_chunk {
            chunk = self.arrays.meta[chunk.idx()]
                .cont
                .expect("internal node spans enough chunks");
        }
        let at = (k % per_chunk) * HANDLE_BYTES;
        decode_child(read_le(&self.arrays.payload(chunk)[at..at + HANDLE_BYTES]))
            .expect("radix descent stays within populated children")
    }

    pub(crate) fn leaf_info(&self, leaf: ChunkIndex) -> &LeafInfo {
        &self.leaves[leaf.idx()]
    }

    pub(crate) fn array_header_at(&self, first_leaf: u32) -> Option<ArrayHeader> {
        self.headers[first_leaf as usize]
    }

    pub fn array_length(&self, a: &ArrayHandle) -> usize {
        a.length
    }

    /// Locates element `i`: its leaf and byte offset inside the leaf.
    /// Costs one node visit per tree level plus the leaf.
    pub fn array_index(&self, a: &ArrayHandle, i: usize) -> Result<(ChunkIndex, usize)> {
        self.check_array(a)?;
        if i >= a.length {
            return Err(HeapError::IndexOutOfBounds {
                index: i,
                length: a.length,
            });
        }
        let size = a.elem_size();
        let per_leaf = self.config.array_leaf_payload_bytes / size;
        let intra = (i % per_leaf) * size;
        let Some(root) = self.leaves[a.first_leaf.idx()].root else {
            self.visit_node();
            return Ok((a.first_leaf, intra));
        };
        let fanout = self.config.fanout;
        let leaf_count = a.length.div_ceil(per_leaf);
        let depth = tree_depth(leaf_count, fanout);
        let mut subtree_leaves = fanout.pow(depth as u32 - 1);
        let mut rem = i / per_leaf;
        let mut node = root;
        for _ in 0..depth {
            self.visit_node();
            node = self.node_child(node, rem / subtree_leaves);
            rem %= subtree_leaves;
            subtree_leaves = (subtree_leaves / fanout).max(1);
        }
        self.visit_node();
        Ok((node, intra))
    }

    pub fn array_read_bytes(&self, a: &ArrayHandle, i: usize) -> Result<&[u8]> {
        let (leaf, at) = self.array_index(a, i)?;
        Ok(&self.arrays.payload(leaf)[at..at + a.elem_size()])
    }

    /// Raw element store. Rejected for reference arrays.
    pub fn array_write_bytes(&mut self, a: &ArrayHandle, i: usize, bytes: &[u8]) -> Result<()> {
        if a.elem == ElemKind::Ref {
            return Err(HeapError::TypeMismatch("raw bytes written to a reference array"));
        }
        if bytes.len() != a.elem_size() {
            return Err(HeapError::TypeMismatch("byte slice does not match element size"));
        }
        let (leaf, at) = self.array_index(a, i)?;
        self.arrays.payload_mut(leaf)[at..at + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    fn decode_elem(&self, elem: ElemKind, bytes: &[u8]) -> Result<Value> {
        match elem {
            ElemKind::Ref => Ok(Value::Ref(self.decode_ref(read_le(bytes))?)),
            ElemKind::Data(n) if n as usize <= 8 => Ok(Value::Word(read_le(bytes))),
            ElemKind::Data(_) => Err(HeapError::TypeMismatch(
                "element wider than a word; use byte access",
            )),
        }
    }

    pub fn array_read(&self, a: &ArrayHandle, i: usize) -> Result<Value> {
        let bytes = self.array_read_bytes(a, i)?;
        self.decode_elem(a.elem, bytes)
    }

    pub fn array_write(&mut self, a: &ArrayHandle, i: usize, value: Value) -> Result<()> {
        match (a.elem, value) {
            (ElemKind::Ref, Value::Ref(new)) => {
                if let Some(n) = &new {
                    self.check_handle(n)?;
                }
                let (leaf, at) = self.array_index(a, i)?;
                let old = read_le(&self.arrays.payload(leaf)[at..at + HANDLE_BYTES]);
                self.log_overwrite(old)?;
                let slot = &mut self.arrays.payload_mut(leaf)[at..at + HANDLE_BYTES];
                write_le(slot, encode_ref(new))
            }
            (ElemKind::Data(n), Value::Word(w)) if n as usize <= 8 => {
                let (leaf, at) = self.array_index(a, i)?;
                write_le(&mut self.arrays.payload_mut(leaf)[at..at + n as usize], w)
            }
            (ElemKind::Data(_), Value::Word(_)) => Err(HeapError::TypeMismatch(
                "element wider than a word; use byte access",
            )),
            (ElemKind::Ref, Value::Word(_)) => {
                Err(HeapError::TypeMismatch("word written to a reference array"))
            }
            (ElemKind::Data(_), Value::Ref(_)) => {
                Err(HeapError::TypeMismatch("handle written to a data array"))
            }
        }
    }

    /// Left fold over all elements in index order, walking the leaf chain.
    /// Costs one visit per leaf plus one per element.
    pub fn fold_leaves<A, E, F>(&self, a: &ArrayHandle, init: A, mut f: F) -> std::result::Result<A, E>
    where
        E: From<HeapError>,
        F: FnMut(A, Value) -> std::result::Result<A, E>,
    {
        self.fold_leaf_bytes(a, init, |acc, bytes| {
            let v = self.decode_elem(a.elem, bytes)?;
            f(acc, v)
        })
    }

    /// [`Heap::fold_leaves`] over raw element bytes, for any element width.
    pub fn fold_leaf_bytes<A, E, F>(&self, a: &ArrayHandle, init: A, mut f: F) -> std::result::Result<A, E>
    where
        E: From<HeapError>,
        F: FnMut(A, &[u8]) -> std::result::Result<A, E>,
    {
        self.check_array(a)?;
        let size = a.elem_size();
        let per_leaf = self.config.array_leaf_payload_bytes.checked_div(size).unwrap_or(0);
        let mut acc = init;
        let mut remaining = a.length;
        let mut leaf = Some(a.first_leaf);
        while let Some(l) = leaf {
            self.visit_node();
            let count = per_leaf.min(remaining);
            let payload = self.arrays.payload(l);
            for k in 0..count {
                self.visit_node();
                acc = f(acc, &payload[k * size..(k + 1) * size])?;
            }
            remaining -= count;
            if remaining == 0 {
                break;
            }
            leaf = self.leaves[l.idx()].next_leaf;
        }
        Ok(acc)
    }

    /// Payload leaves in chain order.
    pub fn leaf_chain(&self, a: &ArrayHandle) -> Result<Vec<ChunkIndex>> {
        self.check_array(a)?;
        let mut out = Vec::new();
        let mut leaf = Some(a.first_leaf);
        while let Some(l) = leaf {
            out.push(l);
            leaf = self.leaves[l.idx()].next_leaf;
        }
        Ok(out)
    }

    /// Levels of internal nodes, measured by walking the leftmost path.
    pub fn array_depth(&self, a: &ArrayHandle) -> Result<usize> {
        self.check_array(a)?;
        let mut depth = 0;
        let mut node = self.leaves[a.first_leaf.idx()].root;
        while let Some(n) = node {
            if self.arrays.meta[n.idx()].kind == ChunkKind::ArrayLeaf {
                break;
            }
            depth += 1;
            node = Some(self.node_child(n, 0));
        }
        Ok(depth)
    }

    /// The array's bytes as one slice. Only single-leaf arrays qualify.
    pub fn contiguous_view(&self, a: &ArrayHandle) -> Result<&[u8]> {
        self.check_array(a)?;
        if self.leaves[a.first_leaf.idx()].root.is_some() {
            let leaves = self.array_layout(a.elem, a.length)?.leaf_count;
            return Err(HeapError::NotContiguous { leaves });
        }
        Ok(&self.arrays.payload(a.first_leaf)[..a.length * a.elem_size()])
    }
}

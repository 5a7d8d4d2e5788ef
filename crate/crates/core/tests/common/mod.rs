//! Random heap graphs mirrored in a plain model, plus a reachability oracle
//! that never looks at heap memory.

#![allow(dead_code)]

use std::collections::VecDeque;

use chunkgc::{ElemKind, Handle, Heap, HeapConfig, RootSet, TypeDescriptor, Value};
use rand::Rng;

/// Object layouts used by the generator: (byte size, ref offsets).
pub const OBJECT_SHAPES: &[(usize, &[usize])] = &[
    (8, &[0]),
    (12, &[]),
    (16, &[0, 8]),
    (24, &[8]),
    (32, &[0, 16, 24]),
    (40, &[0, 32]),
    (48, &[8, 40]),
    (64, &[0, 24, 32, 56]),
    (64, &[]),
];

#[derive(Debug, Clone)]
pub struct Node {
    pub handle: Handle,
    /// Field offset (objects) or element index (ref arrays) of each ref slot.
    pub keys: Vec<usize>,
    pub slots: Vec<Option<usize>>,
    pub chunks: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    pub nodes: Vec<Node>,
    pub roots: Vec<usize>,
}

impl Model {
    pub fn root_set(&self) -> RootSet {
        RootSet::new(self.roots.iter().map(|&r| self.nodes[r].handle))
    }

    /// Brute-force reachability over the model's edges.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut q: VecDeque<usize> = VecDeque::new();
        for &r in &self.roots {
            if !seen[r] {
                seen[r] = true;
                q.push_back(r);
            }
        }
        while let Some(n) = q.pop_front() {
            for &c in self.nodes[n].slots.iter().flatten() {
                if !seen[c] {
                    seen[c] = true;
                    q.push_back(c);
                }
            }
        }
        seen
    }

    pub fn set_slot(&mut self, heap: &mut Heap, node: usize, slot: usize, target: Option<usize>) {
        let key = self.nodes[node].keys[slot];
        let v = Value::Ref(target.map(|t| self.nodes[t].handle));
        match self.nodes[node].handle {
            Handle::Object(o) => heap.write_field(&o, key, v).unwrap(),
            Handle::Array(a) => heap.array_write(&a, key, v).unwrap(),
        }
        self.nodes[node].slots[slot] = target;
    }

    /// Allocates one random node. Panics if the heap is out of room, so size
    /// capacities with [`capacity_for`].
    pub fn alloc_node(&mut self, heap: &mut Heap, rng: &mut impl Rng) -> usize {
        let node = if rng.gen_bool(0.85) {
            let (size, refs) = OBJECT_SHAPES[rng.gen_range(0..OBJECT_SHAPES.len())];
            let t = heap.register_type(TypeDescriptor::new(size, refs.to_vec())).unwrap();
            let o = heap.alloc_object(t).unwrap();
            Node {
                handle: o.into(),
                keys: refs.to_vec(),
                slots: vec![None; refs.len()],
                chunks: heap.object_chunks(size),
            }
        } else if rng.gen_bool(0.6) {
            let n = rng.gen_range(0..=40);
            let a = heap.alloc_array(ElemKind::Ref, n).unwrap();
            Node {
                handle: a.into(),
                keys: (0..n).collect(),
                slots: vec![None; n],
                chunks: heap.array_layout(ElemKind::Ref, n).unwrap().total_chunks,
            }
        } else {
            let n = rng.gen_range(0..=600);
            let a = heap.alloc_array(ElemKind::Data(4), n).unwrap();
            Node {
                handle: a.into(),
                keys: Vec::new(),
                slots: Vec::new(),
                chunks: heap.array_layout(ElemKind::Data(4), n).unwrap().total_chunks,
            }
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }
}

/// Region capacities generous enough for `n` generated nodes plus `extra`.
pub fn capacity_for(n: usize, extra: usize) -> HeapConfig {
    // Worst cases: a 64-byte object takes 2 chunks; a 600-element data array
    // takes 19 leaves + 2; a 40-element ref array takes 3 leaves + 2.
    HeapConfig::with_capacities(2 * (n + extra) + 16, 21 * (n + extra) / 4 + 64, 16)
}

/// A random graph of `n` nodes with edge density `density` and up to
/// `max_roots` roots.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> (Heap, Model) {
    let mut heap = Heap::new(capacity_for(n, extra)).unwrap();
    let mut m = Model::default();
    for _ in 0..n {
        m.alloc_node(&mut heap, rng);
    }
    let density = rng.gen_range(0.02..0.7);
    for i in 0..n {
        for s in 0..m.nodes[i].slots.len() {
            if rng.gen_bool(density) {
                let t = rng.gen_range(0..n);
                m.set_slot(&mut heap, i, s, Some(t));
            }
        }
    }
    let k = rng.gen_range(0..=n.min(12));
    m.roots = (0..k).map(|_| rng.gen_range(0..n)).collect();
    (heap, m)
}

/// Whether the node's storage was reclaimed.
pub fn is_freed(heap: &Heap, node: &Node) -> bool {
    heap.check_handle(&node.handle).is_err()
}

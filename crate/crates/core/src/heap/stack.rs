//! Chunked thread stacks. One chunk per frame; frames come from and return to
//! the stack region without ever involving the collector.

use super::{ChunkIndex, ChunkKind, Handle, Heap, Region};
use crate::error::{HeapError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StackHandle(pub u32);

/// Live reference slots of a frame; these are the frame's root contribution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameDescriptor {
    pub slots: Vec<Option<Handle>>,
}

impl FrameDescriptor {
    pub fn new(slots: impl Into<Vec<Option<Handle>>>) -> Self {
        Self {
            slots: slots.into(),
        }
    }
}

impl Heap {
    pub fn new_stack(&mut self) -> StackHandle {
        if let Some(i) = self.stack_list.iter().position(Option::is_none) {
            self.stack_list[i] = Some(Vec::new());
            return StackHandle(i as u32);
        }
        self.stack_list.push(Some(Vec::new()));
        StackHandle(self.stack_list.len() as u32 - 1)
    }

    fn stack_frames(&self, s: StackHandle) -> Result<&Vec<ChunkIndex>> {
        self.stack_list
            .get(s.0 as usize)
            .and_then(Option::as_ref)
            .ok_or(HeapError::UnknownStack(s.0))
    }

    fn stack_frames_mut(&mut self, s: StackHandle) -> Result<&mut Vec<ChunkIndex>> {
        self.stack_list
            .get_mut(s.0 as usize)
            .and_then(Option::as_mut)
            .ok_or(HeapError::UnknownStack(s.0))
    }

    pub fn push_frame(&mut self, s: StackHandle, frame: FrameDescriptor) -> Result<ChunkIndex> {
        self.stack_frames(s)?;
        let idx = self
            .stacks
            .pop(ChunkKind::StackFrame, false)
            .ok_or(HeapError::OutOfStackChunks)?;
        self.frames[idx.idx()] = Some(frame);
        self.stack_frames_mut(s)?.push(idx);
        Ok(idx)
    }

    pub fn pop_frame(&mut self, s: StackHandle) -> Result<FrameDescriptor> {
        let idx = self.stack_frames_mut(s)?.pop().ok_or(HeapError::EmptyStack)?;
        let frame = self.frames[idx.idx()].take().unwrap_or_default();
        self.free_chunk(idx);
        Ok(frame)
    }

    pub fn frame_depth(&self, s: StackHandle) -> Result<usize> {
        Ok(self.stack_frames(s)?.len())
    }

    /// Rebinds one slot of the top frame.
    pub fn set_frame_slot(&mut self, s: StackHandle, slot: usize, h: Option<Handle>) -> Result<()> {
        if let Some(h) = &h {
            self.check_handle(h)?;
        }
        let top = *self.stack_frames(s)?.last().ok_or(HeapError::EmptyStack)?;
        let frame = self.frames[top.idx()].get_or_insert_with(Default::default);
        if frame.slots.len() <= slot {
            frame.slots.resize(slot + 1, None);
        }
        frame.slots[slot] = h;
        Ok(())
    }

    /// Pops every frame and retires the stack.
    pub fn drop_stack(&mut self, s: StackHandle) -> Result<()> {
        while self.frame_depth(s)? > 0 {
            self.pop_frame(s)?;
        }
        self.stack_list[s.0 as usize] = None;
        Ok(())
    }

    /// Every handle held in a live frame slot of any stack.
    pub fn stack_roots(&self) -> impl Iterator<Item = Handle> + '_ {
        self.stack_list
            .iter()
            .flatten()
            .flatten()
            .filter_map(|idx| self.frames[idx.idx()].as_ref())
            .flat_map(|f| f.slots.iter().flatten().copied())
    }

    pub fn stack_occupancy(&self) -> usize {
        self.allocated_count(Region::Stacks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::{HeapConfig, TypeDescriptor};

    #[test]
    fn push_pop_is_inverse() {
        let mut h = Heap::new(HeapConfig::with_capacities(8, 8, 4)).unwrap();
        let s = h.new_stack();
        h.push_frame(s, FrameDescriptor::default()).unwrap();
        let (depth, occ) = (h.frame_depth(s).unwrap(), h.stack_occupancy());
        h.push_frame(s, FrameDescriptor::default()).unwrap();
        h.pop_frame(s).unwrap();
        assert_eq!(h.frame_depth(s).unwrap(), depth);
        assert_eq!(h.stack_occupancy(), occ);
    }

    #[test]
    fn exhaustion_and_empty_pop() {
        let mut h = Heap::new(HeapConfig::with_capacities(8, 8, 2)).unwrap();
        let s = h.new_stack();
        assert_eq!(h.pop_frame(s), Err(HeapError::EmptyStack));
        h.push_frame(s, FrameDescriptor::default()).unwrap();
        h.push_frame(s, FrameDescriptor::default()).unwrap();
        assert_eq!(
            h.push_frame(s, FrameDescriptor::default()),
            Err(HeapError::OutOfStackChunks)
        );
    }

    #[test]
    fn frame_slots_are_roots() {
        let mut h = Heap::new(HeapConfig::with_capacities(8, 8, 4)).unwrap();
        let t = h.register_type(TypeDescriptor::plain(8)).unwrap();
        let o = h.alloc_object(t).unwrap();
        let s = h.new_stack();
        h.push_frame(s, FrameDescriptor::new(vec![None])).unwrap();
        h.set_frame_slot(s, 2, Some(o.into())).unwrap();
        assert_eq!(h.stack_roots().collect::<Vec<_>>(), vec![Handle::Object(o)]);
        h.drop_stack(s).unwrap();
        assert_eq!(h.stack_roots().count(), 0);
        assert_eq!(h.stack_occupancy(), 0);
    }
}

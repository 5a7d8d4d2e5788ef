use thiserror::Error;

use crate::heap::{ChunkIndex, Region};

/// Failures reported by the chunked heap and tree arrays.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("invalid heap configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid type descriptor: {0}")]
    InvalidType(String),
    #[error("object of {size} bytes exceeds the {max}-byte object limit")]
    ObjectTooLarge { size: usize, max: usize },
    #[error("{region:?} region has {available} free chunks, {needed} needed")]
    OutOfChunks {
        region: Region,
        needed: usize,
        available: usize,
    },
    #[error("stack region exhausted")]
    OutOfStackChunks,
    #[error("pop on an empty stack")]
    EmptyStack,
    #[error("unknown stack {0}")]
    UnknownStack(u32),
    #[error("offset {offset} outside object of {size} bytes")]
    OffsetOutOfBounds { offset: usize, size: usize },
    #[error("index {index} outside array of length {length}")]
    IndexOutOfBounds { index: usize, length: usize },
    #[error("type mismatch: {0}")]
    TypeMismatch(&'static str),
    #[error("value {value:#x} does not fit in {width} bytes")]
    ValueTooWide { value: u64, width: usize },
    #[error("element size {elem_size} does not fit a {leaf}-byte leaf")]
    ElemTooLarge { elem_size: usize, leaf: usize },
    #[error("array with {n} elements needs a nonzero element size")]
    ZeroSizedElements { n: usize },
    #[error("array spans {leaves} leaves and has no contiguous view")]
    NotContiguous { leaves: usize },
    #[error("handle refers to chunk {0:?}, which does not hold a live object")]
    StaleHandle(ChunkIndex),
}

pub type Result<T, E = HeapError> = std::result::Result<T, E>;

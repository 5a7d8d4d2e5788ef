//! Non-moving chunked heap with an incremental mark-sweep collector, a
//! copying generational baseline, and a priority scheduler simulation that
//! drives both from the same workload scripts.

pub mod array;
pub mod backend;
pub mod baseline;
pub mod bench;
pub mod collector;
pub mod error;
pub mod heap;
pub mod rng;
pub mod sched;
pub mod workload;

pub use array::{array_layout, tree_depth, ArrayLayout};
pub use baseline::{
    BaselineConfig, BaselineError, CollectionKind, IndirectionTable, Location, MoveStats, ObjId,
    SemispaceHeap, Shape, Space,
};
pub use collector::{
    CollectionStats, Collector, CollectorState, MarkProgress, MaybeCollect, RootSet, StepOutcome,
    SweepProgress,
};
pub use error::{HeapError, Result};
pub use heap::{
    ArrayHandle, ChunkIndex, ChunkKind, ChunkMeta, ElemKind, FrameDescriptor, FreeList, Handle,
    Heap, HeapConfig, HeapCounters, ObjectHandle, Phase, Region, StackHandle, TypeDescriptor,
    TypeId, Value, HANDLE_BYTES, WORD_BYTES,
};
pub use backend::{Backend, BaselineBackend, ChunkedBackend, ChunkedConfig, EventCost};
pub use rng::XorShift64Star;
pub use sched::{write_trace_csv, Actor, RunLimit, SimConfig, SimError, Simulator, ThreadState, TraceRecord};
pub use workload::{parse_str, parse_workload, Operand, ThreadProgram, WorkloadError, WorkloadEvent};
pub use bench::{
    emit_csv, read_csv, run_scenario, summarize, CollectorKind, LatencyRecord, RunConfig, Summary,
};

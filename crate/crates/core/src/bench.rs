//! Scenario runner and metrics: runs a workload under either collector,
//! turns the trace into per-event latency records, and writes or reads them
//! as CSV.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BaselineBackend, ChunkedBackend, ChunkedConfig};
use crate::baseline::{BaselineConfig, CollectionKind};
use crate::collector::{Collector, RootSet};
use crate::heap::{Heap, HeapConfig, TypeDescriptor, Value};
use crate::sched::{Actor, SimConfig, SimError, Simulator, TraceRecord};
use crate::workload::{parse_workload, ThreadProgram, WorkloadError};

/// Column order of every latency CSV.
pub const CSV_HEADER: [&str; 8] = [
    "scenario",
    "collector",
    "iteration",
    "op",
    "work_units",
    "wall_nanos",
    "chunks_touched",
    "bytes_copied",
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario {scenario}: {source}")]
    Scenario { scenario: String, source: SimError },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectorKind {
    Chunked,
    Baseline,
}

impl fmt::Display for CollectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectorKind::Chunked => "chunked",
            CollectorKind::Baseline => "baseline",
        })
    }
}

impl FromStr for CollectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chunked" => Ok(CollectorKind::Chunked),
            "baseline" => Ok(CollectorKind::Baseline),
            other => Err(format!("unknown collector `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub scenario: String,
    pub collector: CollectorKind,
    pub iteration: u64,
    pub op: String,
    pub work_units: u64,
    /// Empty when wall-clock output is suppressed.
    pub wall_nanos: Option<u64>,
    pub chunks_touched: u64,
    pub bytes_copied: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub collector: CollectorKind,
    pub workload: PathBuf,
    pub seed: u64,
    pub object_chunks: usize,
    pub array_chunks: usize,
    pub stack_chunks: usize,
    pub baseline_heap_bytes: usize,
    pub mark_budget: usize,
    pub sweep_budget: usize,
    pub gc_trigger: f64,
    pub priorities: u8,
    pub suppress_wallclock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let heap = HeapConfig::default();
        let chunked = ChunkedConfig::default();
        Self {
            scenario: String::new(),
            collector: CollectorKind::Chunked,
            workload: PathBuf::new(),
            seed: 1,
            object_chunks: heap.object_region_chunks,
            array_chunks: heap.array_region_chunks,
            stack_chunks: heap.stack_region_chunks,
            baseline_heap_bytes: BaselineConfig::default().heap_bytes,
            mark_budget: chunked.mark_budget,
            sweep_budget: chunked.sweep_budget,
            gc_trigger: chunked.gc_trigger,
            priorities: SimConfig::default().levels,
            suppress_wallclock: false,
        }
    }
}

impl RunConfig {
    /// Sizing for the shipped `figure2` script: room for about eight live
    /// million-element arrays in the chunked heap, and a 24 MiB baseline heap
    /// whose nursery holds exactly one.
    pub fn figure2(collector: CollectorKind, workload: impl Into<PathBuf>) -> Self {
        Self {
            scenario: "figure2".into(),
            collector,
            workload: workload.into(),
            object_chunks: 1024,
            array_chunks: 262_144,
            stack_chunks: 64,
            baseline_heap_bytes: 24 << 20,
            suppress_wallclock: true,
            ..Self::default()
        }
    }

    fn scenario_name(&self) -> String {
        if !self.scenario.is_empty() {
            return self.scenario.clone();
        }
        self.workload
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "workload".into())
    }

    pub fn heap_config(&self) -> HeapConfig {
        HeapConfig::with_capacities(self.object_chunks, self.array_chunks, self.stack_chunks)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            levels: self.priorities,
            seed: self.seed,
            ..SimConfig::default()
        }
    }
}

/// Everything a run produced, for callers that need more than the CSV rows.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub records: Vec<LatencyRecord>,
    pub trace: Vec<TraceRecord>,
    /// Largest chunk count of any single object allocation.
    pub max_object_chunks: u64,
    /// Baseline collections in order; empty for the chunked collector.
    pub baseline_collections: Vec<CollectionKind>,
    /// Chunked collector cycles completed.
    pub cycles: u64,
}

pub fn run_scenario(config: &RunConfig) -> Result<Vec<LatencyRecord>, BenchError> {
    Ok(run_scenario_detailed(config)?.records)
}

pub fn run_scenario_detailed(config: &RunConfig) -> Result<ScenarioRun, BenchError> {
    let programs = parse_workload(&config.workload)?;
    run_programs(config, &programs)
}

pub fn run_programs(config: &RunConfig, programs: &[ThreadProgram]) -> Result<ScenarioRun, BenchError> {
    let scenario = config.scenario_name();
    let ctx = |source: SimError| BenchError::Scenario {
        scenario: scenario.clone(),
        source,
    };
    match config.collector {
        CollectorKind::Chunked => {
            let backend = ChunkedBackend::new(ChunkedConfig {
                heap: config.heap_config(),
                mark_budget: config.mark_budget,
                sweep_budget: config.sweep_budget,
                gc_trigger: config.gc_trigger,
            })
            .map_err(ctx)?;
            let (mut run, sim) = drive(config, &scenario, programs, backend).map_err(ctx)?;
            run.cycles = sim.backend().collector().cycles_completed();
            Ok(run)
        }
        CollectorKind::Baseline => {
            let backend = BaselineBackend::new(BaselineConfig::with_heap_bytes(config.baseline_heap_bytes))
                .map_err(ctx)?;
            let (mut run, sim) = drive(config, &scenario, programs, backend).map_err(ctx)?;
            run.baseline_collections = sim.backend().heap().collections().to_vec();
            Ok(run)
        }
    }
}

fn drive<B: Backend>(
    config: &RunConfig,
    scenario: &str,
    programs: &[ThreadProgram],
    backend: B,
) -> Result<(ScenarioRun, Simulator<B>), SimError> {
    let mut sim = Simulator::new(config.sim_config(), backend)?;
    for p in programs {
        sim.spawn(p.priority, p.events.clone())?;
    }
    let mut records = Vec::new();
    let mut max_object_chunks = 0;
    loop {
        let start = Instant::now();
        let Some(rec) = sim.step()? else { break };
        let nanos = start.elapsed().as_nanos() as u64;
        let Actor::Mutator(_) = rec.actor else { continue };
        max_object_chunks = max_object_chunks.max(rec.max_object_chunks);
        records.push(LatencyRecord {
            scenario: scenario.to_string(),
            collector: config.collector,
            iteration: rec.event_index.unwrap_or_default() as u64,
            op: rec.event.to_string(),
            work_units: rec.work_units,
            wall_nanos: (!config.suppress_wallclock).then_some(nanos),
            chunks_touched: rec.chunks_touched,
            bytes_copied: rec.bytes_copied,
        });
    }
    let run = ScenarioRun {
        records,
        trace: sim.trace().to_vec(),
        max_object_chunks,
        baseline_collections: Vec::new(),
        cycles: 0,
    };
    Ok((run, sim))
}

/// Collection cost at one region capacity with a fixed live set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub capacity: usize,
    pub live_chunks: usize,
    pub mark_work_units: u64,
    pub sweep_work_units: u64,
}

/// Builds a heap whose object and array regions each hold `capacity` chunks,
/// roots a chain of two-chunk objects totalling `live_chunks`, litters both
/// regions with garbage and runs one full collection.
pub fn heap_sweep_point(live_chunks: usize, capacity: usize) -> Result<SweepPoint, BenchError> {
    if !live_chunks.is_multiple_of(2) || live_chunks >= capacity {
        return Err(BenchError::Config(format!(
            "live set of {live_chunks} chunks needs an even size below capacity {capacity}"
        )));
    }
    let heap_err = |e: crate::HeapError| BenchError::Scenario {
        scenario: "heap-sweep".into(),
        source: e.into(),
    };
    let mut heap = Heap::new(HeapConfig::with_capacities(capacity, capacity, 1)).map_err(heap_err)?;
    let pair = heap
        .register_type(TypeDescriptor::new(40, vec![0]))
        .map_err(heap_err)?;
    let mut head = None;
    for _ in 0..live_chunks / 2 {
        let o = heap.alloc_object(pair).map_err(heap_err)?;
        heap.write_field(&o, 0, Value::Ref(head)).map_err(heap_err)?;
        head = Some(o.into());
    }
    let garbage_target = capacity * 3 / 4;
    while heap.allocated_count(crate::Region::Objects) + 2 <= garbage_target {
        heap.alloc_object(pair).map_err(heap_err)?;
    }
    while heap.allocated_count(crate::Region::Arrays) + 34 <= garbage_target {
        heap.alloc_array(crate::ElemKind::Data(4), 1024).map_err(heap_err)?;
    }
    let stats = Collector::new().collect_full(&mut heap, &RootSet::new(head));
    Ok(SweepPoint {
        capacity,
        live_chunks,
        mark_work_units: stats.mark_work_units,
        sweep_work_units: stats.sweep_work_units,
    })
}

/// The heap-sweep scenario: one point per capacity multiple of the live set,
/// reported as a `mark` and a `sweep` record each.
pub fn heap_sweep(live_chunks: usize, multiples: &[usize]) -> Result<(Vec<SweepPoint>, Vec<LatencyRecord>), BenchError> {
    let mut points = Vec::new();
    let mut records = Vec::new();
    for (i, &m) in multiples.iter().enumerate() {
        let p = heap_sweep_point(live_chunks, live_chunks * m)?;
        for (op, work) in [("mark", p.mark_work_units), ("sweep", p.sweep_work_units)] {
            records.push(LatencyRecord {
                scenario: format!("heap-sweep-{m}x"),
                collector: CollectorKind::Chunked,
                iteration: i as u64,
                op: op.into(),
                work_units: work,
                wall_nanos: None,
                chunks_touched: 0,
                bytes_copied: 0,
            });
        }
        points.push(p);
    }
    Ok((points, records))
}

pub fn write_csv<W: Write>(records: &[LatencyRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[LatencyRecord], path: impl AsRef<Path>) -> Result<(), BenchError> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<LatencyRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<LatencyRecord>, BenchError> {
    read_csv_from(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub collector: CollectorKind,
    pub count: usize,
    pub min: u64,
    pub median: f64,
    pub p99: u64,
    pub max: u64,
    /// `max / median`; infinite when the median is zero and the max is not.
    pub max_over_median: f64,
}

/// Median of sorted values; the mean of the middle pair for even counts.
pub fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[u64], pct: f64) -> u64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize_series(values: &[u64]) -> Option<(u64, f64, u64, u64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let med = median(&v);
    let max = *v.last().expect("nonempty");
    let ratio = if med > 0.0 {
        max as f64 / med
    } else if max == 0 {
        1.0
    } else {
        f64::INFINITY
    };
    Some((v[0], med, percentile(&v, 99.0), max, ratio))
}

/// Per (scenario, collector) statistics of `work_units`, in order of first
/// appearance.
pub fn summarize(records: &[LatencyRecord]) -> Vec<Summary> {
    let mut groups: Vec<((String, CollectorKind), Vec<u64>)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.collector);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.work_units),
            None => groups.push((key, vec![r.work_units])),
        }
    }
    groups
        .into_iter()
        .map(|((scenario, collector), v)| {
            let (min, median, p99, max, ratio) = summarize_series(&v).expect("groups are nonempty");
            Summary {
                scenario,
                collector,
                count: v.len(),
                min,
                median,
                p99,
                max,
                max_over_median: ratio,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(summaries: &[Summary], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "collector", "count", "min", "median", "p99", "max", "max_over_median"])?;
    for s in summaries {
        w.write_record([
            s.scenario.clone(),
            s.collector.to_string(),
            s.count.to_string(),
            s.min.to_string(),
            format!("{:.1}", s.median),
            s.p99.to_string(),
            s.max.to_string(),
            format!("{:.3}", s.max_over_median),
        ])?;
    }
    w.flush()?;
    Ok(())
}

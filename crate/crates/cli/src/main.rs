use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chunkgc::bench::{heap_sweep, run_scenario_detailed, summarize, write_csv, write_summary};
use chunkgc::{read_csv, write_trace_csv, CollectorKind, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chunkgc", version, about = "Run allocation workloads against the chunked and copying collectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a workload script and emit one CSV row per mutator event.
    Run(RunArgs),
    /// Measure collection work for a fixed live set across region capacities.
    HeapSweep(SweepArgs),
    /// Print min/median/p99/max of work units per scenario from CSV files.
    Summarize {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Heap sizing for the shipped figure2 script.
    Figure2,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_collector)]
    collector: CollectorKind,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for the event CSV; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Start from a named sizing; explicit flags still override it.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    heap_object_chunks: Option<usize>,
    #[arg(long)]
    heap_array_chunks: Option<usize>,
    #[arg(long)]
    heap_stack_chunks: Option<usize>,
    #[arg(long)]
    baseline_heap_bytes: Option<usize>,
    #[arg(long)]
    mark_budget: Option<usize>,
    #[arg(long)]
    sweep_budget: Option<usize>,
    #[arg(long)]
    gc_trigger: Option<f64>,
    #[arg(long)]
    priorities: Option<u8>,
    /// Leave the wall_nanos column empty so repeated runs are byte-identical.
    #[arg(long)]
    suppress_wallclock: bool,
    /// Also write the per-step scheduler trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the summary table to stderr after the run.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 10_000)]
    live_chunks: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    multiples: Vec<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_collector(s: &str) -> Result<CollectorKind, String> {
    s.parse()
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let mut c = match self.preset {
            Some(Preset::Figure2) => RunConfig::figure2(self.collector, &self.workload),
            None => RunConfig {
                collector: self.collector,
                workload: self.workload.clone(),
                ..RunConfig::default()
            },
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(
            seed => seed,
            scenario => scenario,
            heap_object_chunks => object_chunks,
            heap_array_chunks => array_chunks,
            heap_stack_chunks => stack_chunks,
            baseline_heap_bytes => baseline_heap_bytes,
            mark_budget => mark_budget,
            sweep_budget => sweep_budget,
            gc_trigger => gc_trigger,
            priorities => priorities
        );
        c.suppress_wallclock |= self.suppress_wallclock;
        c
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.config();
    let run = run_scenario_detailed(&config)?;
    let mut out = output(args.csv.as_ref())?;
    write_csv(&run.records, &mut out)?;
    out.flush()?;
    if let Some(p) = &args.trace {
        let mut t = output(Some(p))?;
        write_trace_csv(&run.trace, &mut t)?;
        t.flush()?;
    }
    if args.summary {
        write_summary(&summarize(&run.records), io::stderr().lock())?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.multiples.is_empty() {
        bail!("--multiples needs at least one value");
    }
    let (_, records) = heap_sweep(args.live_chunks, &args.multiples)?;
    let mut out = output(args.csv.as_ref())?;
    write_csv(&records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let result = dispatch(Cli::parse().command);
    // A closed downstream pipe (`| head`) is not a failure.
    if let Err(e) = &result {
        let broken_pipe = e
            .chain()
            .filter_map(|c| c.downcast_ref::<io::Error>())
            .any(|io| io.kind() == io::ErrorKind::BrokenPipe);
        if broken_pipe {
            return Ok(());
        }
    }
    result
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::HeapSweep(args) => sweep(args),
        Command::Summarize { csv } => {
            let mut records = Vec::new();
            for p in &csv {
                records.extend(read_csv(p).with_context(|| format!("reading {}", p.display()))?);
            }
            write_summary(&summarize(&records), io::stdout().lock())?;
            Ok(())
        }
    }
}

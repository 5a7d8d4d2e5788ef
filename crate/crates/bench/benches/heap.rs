use std::hint::black_box;

use chunkgc::{ElemKind, Heap, HeapConfig, TypeDescriptor, Value};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn alloc_objects(c: &mut Criterion) {
    let mut g = c.benchmark_group("alloc_object");
    for size in [16usize, 64] {
        g.throughput(Throughput::Elements(1000));
        g.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, &size| {
            b.iter_batched(
                || {
                    let mut heap = Heap::new(HeapConfig::with_capacities(2048, 16, 4)).unwrap();
                    let t = heap.register_type(TypeDescriptor::plain(size)).unwrap();
                    (heap, t)
                },
                |(mut heap, t)| {
                    for _ in 0..1000 {
                        black_box(heap.alloc_object(t).unwrap());
                    }
                    heap
                },
                criterion::BatchSize::SmallInput,
            );
        });
    }
    g.finish();
}

// Per-index descent against the leaf-chain fold over the same array.
fn array_traversal(c: &mut Criterion) {
    let mut g = c.benchmark_group("array_sum");
    for n in [1_000usize, 100_000] {
        let mut heap = Heap::new(HeapConfig::with_capacities(16, 8192, 4)).unwrap();
        let a = heap.alloc_array(ElemKind::Data(4), n).unwrap();
        for i in 0..n {
            heap.array_write(&a, i, Value::Word(i as u64)).unwrap();
        }
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("indexed", n), &n, |b, &n| {
            b.iter(|| {
                let mut s = 0u64;
                for i in 0..n {
                    if let Value::Word(v) = heap.array_read(&a, i).unwrap() {
                        s += v;
                    }
                }
                black_box(s)
            });
        });
        g.bench_with_input(BenchmarkId::new("fold_leaves", n), &n, |b, _| {
            b.iter(|| {
                black_box(
                    heap.fold_leaves(&a, 0u64, |s, v| match v {
                        Value::Word(v) => Ok::<_, chunkgc::HeapError>(s + v),
                        _ => Ok(s),
                    })
                    .unwrap(),
                )
            });
        });
    }
    g.finish();
}

criterion_group!(benches, alloc_objects, array_traversal);
criterion_main!(benches);

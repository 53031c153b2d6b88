use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use veil_core::suite::{Suite, MAX_SEALED_PLAINTEXT};
use veil_core::{ContentType, Direction, RecordFrame};

fn seal_open(c: &mut Criterion) {
    let mut group = c.benchmark_group("seal_open");
    for suite in [Suite::Standard, Suite::Null] {
        for size in [64usize, 1024, MAX_SEALED_PLAINTEXT] {
            let frame = RecordFrame::new(ContentType::ApplicationData, vec![0x5a; size]);
            group.throughput(Throughput::Bytes(size as u64));
            group.bench_with_input(BenchmarkId::new(format!("{suite:?}"), size), &frame, |b, frame| {
                let mut tx = suite.derive_channel_keys(&[1; 32], &[2; 32], &[3; 32], &[4; 32]);
                let mut rx = tx.clone();
                b.iter(|| {
                    let sealed = tx.seal(Direction::ClientToServer, black_box(frame)).unwrap();
                    rx.open(Direction::ClientToServer, &sealed).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, seal_open);
criterion_main!(benches);

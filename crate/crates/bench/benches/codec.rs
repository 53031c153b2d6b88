use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use veil_core::middlebox::{FlowId, FlowState};
use veil_core::suite::Suite;
use veil_core::wire::{
    decode_handshake, decode_record, encode_handshake, encode_record, encode_sni_extension,
    ClientHello, HandshakeMessage, ProtocolVersion,
};
use veil_core::{ContentType, Direction, RecordFrame, SniValue};

fn hello() -> HandshakeMessage {
    HandshakeMessage::ClientHello(ClientHello {
        client_version: ProtocolVersion::TLS12,
        random: [9; 32],
        session_id: vec![1; 32],
        cipher_suites: vec![Suite::Standard.id(), Suite::Null.id()],
        extensions: vec![encode_sni_extension(&SniValue::new("video.example").unwrap())],
    })
}

fn codec(c: &mut Criterion) {
    let msg = hello();
    let body = encode_handshake(&msg);
    let wire = encode_record(&RecordFrame::new(ContentType::Handshake, body.clone())).unwrap();

    c.bench_function("client_hello_encode", |b| b.iter(|| encode_handshake(black_box(&msg))));
    c.bench_function("client_hello_decode", |b| b.iter(|| decode_handshake(black_box(&body)).unwrap()));
    c.bench_function("record_decode", |b| b.iter(|| decode_record(black_box(&wire)).unwrap()));

    let mut group = c.benchmark_group("observer");
    group.throughput(Throughput::Bytes(wire.len() as u64));
    group.bench_function("classify_hello", |b| {
        b.iter(|| {
            let mut flow = FlowState::new(FlowId::default());
            flow.observe_bytes(Direction::ClientToServer, black_box(&wire), 0);
            flow
        })
    });
    group.finish();
}

criterion_group!(benches, codec);
criterion_main!(benches);

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use veil_core::cert::{generate_self_signed, validate_certificate};
use veil_core::middlebox::FlowState;
use veil_core::suite::Suite;
use veil_core::wire::{
    decode_handshake, decode_record, decode_sni_extension, encode_handshake, encode_record,
    encode_sni_extension, CipherSuiteId, ClientHello, Extension, HandshakeMessage,
    ProtocolVersion, RecordReader, ServerHello,
};
use veil_core::{ContentType, Direction, RecordFrame, SniValue, Validity};

fn host_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,15}(\\.[a-z][a-z0-9-]{0,15}){0,3}"
}

fn version() -> impl Strategy<Value = ProtocolVersion> {
    (any::<u8>(), any::<u8>()).prop_map(|(major, minor)| ProtocolVersion { major, minor })
}

fn extension() -> impl Strategy<Value = Extension> {
    prop_oneof![
        (any::<u16>(), proptest::collection::vec(any::<u8>(), 0..48)).prop_map(|(t, d)| Extension {
            extension_type: t,
            extension_data: d,
        }),
        host_name().prop_map(|h| encode_sni_extension(&SniValue::new(h).unwrap())),
    ]
}

fn message() -> impl Strategy<Value = HandshakeMessage> {
    let bytes = |n| proptest::collection::vec(any::<u8>(), 0..n);
    prop_oneof![
        (
            version(),
            any::<[u8; 32]>(),
            bytes(33),
            proptest::collection::vec(any::<u16>().prop_map(CipherSuiteId), 0..8),
            proptest::collection::vec(extension(), 0..5),
        )
            .prop_map(|(client_version, random, session_id, cipher_suites, extensions)| {
                HandshakeMessage::ClientHello(ClientHello {
                    client_version,
                    random,
                    session_id,
                    cipher_suites,
                    extensions,
                })
            }),
        (version(), any::<[u8; 32]>(), bytes(33), any::<u16>(), proptest::collection::vec(extension(), 0..3))
            .prop_map(|(server_version, random, session_id, suite, extensions)| {
                HandshakeMessage::ServerHello(ServerHello {
                    server_version,
                    random,
                    session_id,
                    chosen_suite: CipherSuiteId(suite),
                    extensions,
                })
            }),
        bytes(600).prop_map(|cert_bytes| HandshakeMessage::Certificate { cert_bytes }),
        Just(HandshakeMessage::ServerHelloDone),
        bytes(100).prop_map(|key_share| HandshakeMessage::ClientKeyExchange { key_share }),
        any::<[u8; 12]>().prop_map(|verify_data| HandshakeMessage::Finished { verify_data }),
    ]
}

fn content_type() -> impl Strategy<Value = ContentType> {
    prop_oneof![
        Just(ContentType::ChangeCipherSpec),
        Just(ContentType::Alert),
        Just(ContentType::Handshake),
        Just(ContentType::ApplicationData),
    ]
}

fn frame() -> impl Strategy<Value = RecordFrame> {
    (content_type(), proptest::collection::vec(any::<u8>(), 0..300))
        .prop_map(|(ct, payload)| RecordFrame::new(ct, payload))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn handshake_messages_round_trip_through_records(msg in message()) {
        let body = encode_handshake(&msg);
        prop_assert_eq!(decode_handshake(&body).unwrap(), msg.clone());
        let wire = encode_record(&RecordFrame::new(ContentType::Handshake, body.clone())).unwrap();
        let (frame, used) = decode_record(&wire).unwrap().unwrap();
        prop_assert_eq!(used, wire.len());
        prop_assert_eq!(frame.payload, body);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn chunked_stream_yields_the_same_records(
        frames in proptest::collection::vec(frame(), 0..8),
        cuts in proptest::collection::vec(1usize..64, 1..40),
    ) {
        let stream: Vec<u8> = frames.iter().flat_map(|f| encode_record(f).unwrap()).collect();
        let mut reader = RecordReader::new();
        let mut got = Vec::new();
        let mut pos = 0;
        for cut in cuts.iter().cycle() {
            if pos >= stream.len() {
                break;
            }
            let end = (pos + cut).min(stream.len());
            reader.push(&stream[pos..end]);
            pos = end;
            while let Some(f) = reader.next_frame().unwrap() {
                got.push(f);
            }
        }
        prop_assert_eq!(got, frames);
        prop_assert_eq!(reader.buffered(), 0);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = decode_record(&bytes);
        let _ = decode_handshake(&bytes);
        let _ = decode_sni_extension(&Extension { extension_type: 0, extension_data: bytes.clone() });
        let mut flow = FlowState::default();
        flow.observe_bytes(Direction::ClientToServer, &bytes, 0);
        flow.observe_bytes(Direction::ServerToClient, &bytes, 1);
    }

    #[test]
    fn host_names_survive_the_extension(name in host_name()) {
        let sni = SniValue::new(name.clone()).unwrap();
        let ext = encode_sni_extension(&sni);
        let back = decode_sni_extension(&ext).unwrap();
        prop_assert_eq!(back.as_str(), name.as_str());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn sealed_records_hide_and_restore_plaintext(
        secret in any::<[u8; 32]>(),
        hash in any::<[u8; 32]>(),
        plaintext in proptest::collection::vec(any::<u8>(), 16..2000),
    ) {
        let mut sender = Suite::Standard.derive_channel_keys(&secret, &hash, &[1; 32], &[2; 32]);
        let mut receiver = sender.clone();
        let frame = RecordFrame::new(ContentType::Handshake, plaintext.clone());
        let sealed = sender.seal(Direction::ClientToServer, &frame).unwrap();
        prop_assert_eq!(sealed.content_type, ContentType::ApplicationData);
        prop_assert!(!sealed.payload.windows(16).any(|w| w == &plaintext[..16]));
        prop_assert_eq!(receiver.open(Direction::ClientToServer, &sealed).unwrap(), frame);
    }

    #[test]
    fn any_certificate_field_change_breaks_the_signature(field in 0usize..5, tweak in 1u8..=255) {
        let issued = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
        let (mut doc, _) = generate_self_signed("video.example", 90, Some(field as u64), issued).unwrap();
        match field {
            0 => doc.subject_name = format!("video{tweak}.example"),
            1 => doc.public_part[tweak as usize % 64] ^= tweak,
            2 => doc.not_before -= Duration::seconds(tweak as i64),
            3 => doc.not_after += Duration::seconds(tweak as i64),
            _ => doc.serial ^= tweak as u64,
        }
        let now = issued + Duration::days(1);
        prop_assert_eq!(validate_certificate(&doc, None, now), Validity::BadSignature);
    }
}

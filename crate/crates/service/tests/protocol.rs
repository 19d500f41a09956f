mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_service::protocol::*;
use support::gen::{message, TYPES};

#[test]
fn thousand_messages_of_every_type_round_trip_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &t in &TYPES {
        for _ in 0..1000 {
            let m = message(&mut rng, t);
            let bytes = m.encode();
            let (back, used) = Message::decode(&bytes).unwrap_or_else(|e| panic!("type {t}: {e}"));
            assert_eq!(used, bytes.len());
            assert_eq!(back.encode(), bytes);
            let chan = m.encode_channel();
            assert_eq!(Message::decode_channel(&chan).unwrap().encode_channel(), chan);
        }
    }
}

#[test]
fn decoded_values_equal_when_floats_are_ordinary() {
    let m = Message::RenderRequest(RenderRequestMsg {
        request_id: 42,
        backend: 2,
        flags: FLAG_WANT_DEPTH | FLAG_CONTINUOUS,
        pose: [0.5, 0.5, -0.5, 0.5, 1.0, -2.0, 3.25],
        intrinsics: [120.0, 121.5, 64.0, 63.5],
        width: 128,
        height: 96,
        crop: Some([-1.0, -1.0, 0.0, 1.0, 1.0, 2.0]),
    });
    assert_eq!(Message::decode(&m.encode()).unwrap().0, m);
    let s = Message::RenderStage(RenderStageMsg {
        request_id: 3,
        stage: StageKind::S50,
        width: 2,
        height: 1,
        render_time_us: 1500,
        rgb: vec![1, 2, 3, 4, 5, 6],
        depth: Some(vec![1.5, 2.5]),
    });
    assert_eq!(Message::decode(&s.encode()).unwrap().0, s);
}

#[test]
fn stream_of_concatenated_messages() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let msgs: Vec<Message> = (0..50).map(|i| message(&mut rng, TYPES[i % TYPES.len()])).collect();
    let mut wire = Vec::new();
    for m in &msgs {
        write_message(&mut wire, m).unwrap();
    }
    let mut reader = &wire[..];
    for m in &msgs {
        let got = read_message(&mut reader, MAX_PAYLOAD).unwrap().unwrap();
        assert_eq!(got.encode(), m.encode());
    }
    assert!(read_message(&mut reader, MAX_PAYLOAD).unwrap().is_none());
}

#[test]
fn header_errors() {
    let good = Message::Cancel { request_id: 1 }.encode();
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(Message::decode(&bad), Err(ProtocolError::BadMagic(_))));
    let mut bad = good.clone();
    bad[4] = 2;
    assert_eq!(Message::decode(&bad), Err(ProtocolError::BadVersion(2)));
    let mut bad = good.clone();
    bad[5] = 0x08;
    assert_eq!(Message::decode(&bad), Err(ProtocolError::UnknownType(0x08)));
    let mut bad = good.clone();
    bad[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(Message::decode(&bad), Err(ProtocolError::TooLarge(_))));
    assert_eq!(Message::decode(&good[..5]), Err(ProtocolError::Truncated { needed: 5 }));
    assert_eq!(Message::decode(&good[..12]), Err(ProtocolError::Truncated { needed: 6 }));
}

#[test]
fn payload_errors() {
    // cancel with one trailing byte
    let mut p = 5u64.to_le_bytes().to_vec();
    p.push(0);
    assert_eq!(Message::decode_payload(TYPE_CANCEL, &p), Err(ProtocolError::Trailing(1)));
    // hello with an unknown role
    let mut hello = vec![0u8; 16];
    hello.push(2);
    assert_eq!(Message::decode_payload(TYPE_HELLO, &hello), Err(ProtocolError::Invalid("role")));
    // request with reserved flag bits
    let req = Message::RenderRequest(RenderRequestMsg {
        request_id: 1,
        backend: 0,
        flags: 0,
        pose: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        intrinsics: [1.0; 4],
        width: 1,
        height: 1,
        crop: None,
    });
    let mut payload = req.encode_payload();
    payload[9] = 0x80;
    assert_eq!(Message::decode_payload(TYPE_RENDER_REQUEST, &payload), Err(ProtocolError::Invalid("flags")));
    // error text must be utf-8
    let mut e = 0u64.to_le_bytes().to_vec();
    e.push(ErrorCode::Render as u8);
    e.extend_from_slice(&[0xff, 0xfe]);
    assert!(matches!(Message::decode_payload(TYPE_ERROR, &e), Err(ProtocolError::Invalid(_))));
    assert!(Message::decode_channel(&[]).is_err());
    assert_eq!(Message::decode_channel(&[9, 4]), Err(ProtocolError::BadVersion(9)));
}

#[test]
fn validate_flags_inconsistent_stage_lengths() {
    let s = Message::RenderStage(RenderStageMsg {
        request_id: 1,
        stage: StageKind::S10,
        width: 2,
        height: 2,
        render_time_us: 0,
        rgb: vec![0; 11],
        depth: None,
    });
    assert!(s.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_never_panic_and_accepted_input_is_canonical(data in proptest::collection::vec(any::<u8>(), 0..256)) {
        if let Ok((m, used)) = Message::decode(&data) {
            prop_assert_eq!(&m.encode()[..], &data[..used]);
        }
        if let Ok(m) = Message::decode_channel(&data) {
            prop_assert_eq!(m.encode_channel(), data.clone());
        }
        for &t in &TYPES {
            if let Ok(m) = Message::decode_payload(t, &data) {
                prop_assert_eq!(m.encode_payload(), data.clone());
            }
        }
    }

    #[test]
    fn mutated_valid_messages_are_rejected_or_canonical(seed in any::<u64>(), flips in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = TYPES[rng.gen_range(0..TYPES.len())];
        let mut bytes = message(&mut rng, t).encode();
        for _ in 0..flips {
            let i = rng.gen_range(0..bytes.len());
            bytes[i] ^= 1 << rng.gen_range(0..8);
        }
        if let Ok((m, used)) = Message::decode(&bytes) {
            prop_assert_eq!(&m.encode()[..], &bytes[..used]);
        }
    }
}

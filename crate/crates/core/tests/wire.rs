mod common;

use common::{fuzz_frames, golden, golden_vector, random_envelope, random_message};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sa2fe::wire::{Envelope, Message, MessageType, WireError, HEADER_LEN, MAX_PAYLOAD};

const FRAMES: &str = "frames.hex";
const SID: [u8; 16] = [0xa0, 0xa1, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xab, 0xac, 0xad, 0xae, 0xaf];

fn key() -> [u8; 32] {
    std::array::from_fn(|i| i as u8)
}

/// The messages the golden file was built from, in file order.
fn golden_messages() -> Vec<(&'static str, Message)> {
    let tok = b"tok".to_vec();
    vec![
        ("sp-register", Message::SpRegister { spid: "sp1".into(), sname: "s1".into(), service_key: key(), public_key: vec![1, 2], secret_key: vec![3] }),
        ("es-register-request", Message::EsRegisterRequest { esid: "e1".into(), reg_info: b"reg".to_vec(), s_type: "s1".into() }),
        (
            "es-credentials",
            Message::EsCredentials {
                status: 0,
                s_type: "s1".into(),
                service_key: key(),
                public_key: vec![0xaa],
                workload: "echo".into(),
                puzzle_params: vec![2, 0],
                trapdoor: vec![],
            },
        ),
        ("es-puzzle-register", Message::EsPuzzleRegister { esid: "e3".into(), slot: 2, puzzle: vec![2, 0, 0xff] }),
        (
            "token-request",
            Message::TokenRequest { s_type: "s2".into(), blinded_agnostic: vec![0x10], blinded_specific: vec![0x20, 0x21], payment: b"pay".to_vec() },
        ),
        (
            "token-issue",
            Message::TokenIssue {
                status: 0,
                blind_sig_agnostic: vec![0x11],
                blind_sig_specific: vec![0x22],
                service_key: key(),
                service_public_key: vec![0x33],
                puzzle_params: vec![0x44],
                trapdoor: vec![0x55],
            },
        ),
        ("offload-init", Message::OffloadInit { token: tok.clone() }),
        ("puzzle-list", Message::PuzzleList { version: 0x0102030405060708, puzzles: vec![vec![1], vec![], vec![2, 3]] }),
        ("offload-request", Message::OffloadRequest { token: tok.clone(), puzzle: vec![2, 0], ciphertext: b"ct".to_vec() }),
        ("user-abort", Message::UserAbort),
        ("forward-to-es", Message::ForwardToEs { token: tok.clone(), ciphertext: b"ct".to_vec() }),
        ("es-response", Message::EsResponse { ciphertext: b"resp".to_vec() }),
        ("response-to-user", Message::ResponseToUser { ciphertext: b"resp".to_vec() }),
        ("claim-bs", Message::ClaimBs { bsid: "bs".into(), token: tok.clone() }),
        ("claim-es", Message::ClaimEs { esid: "e1".into(), s_type: "s2".into(), token: tok }),
        ("claim-result", Message::ClaimResult { status: 0, amount: 8 }),
        ("ack", Message::Ack { status: 15, detail: b"dup".to_vec() }),
        ("reject", Message::Reject { reason: 4, detail: "puzzle replay".into() }),
    ]
}

#[test]
fn golden_frames_cover_every_kind_and_match_byte_for_byte() {
    let vectors = golden(FRAMES);
    let messages = golden_messages();
    assert_eq!(vectors.len(), MessageType::ALL.len());
    for ((name, bytes), (want_name, msg)) in vectors.iter().zip(&messages) {
        assert_eq!(name, want_name);
        let env = Envelope::new(SID, msg.clone());
        assert_eq!(&env.encode(), bytes, "{name}");
        assert_eq!(Envelope::decode(bytes).unwrap(), env, "{name}");
    }
    let kinds: Vec<_> = messages.iter().map(|(_, m)| m.msg_type()).collect();
    assert_eq!(kinds, MessageType::ALL);
}

#[test]
fn truncation_at_every_offset_is_an_error() {
    for (name, bytes) in golden(FRAMES) {
        for cut in 0..bytes.len() {
            assert!(Envelope::decode(&bytes[..cut]).is_err(), "{name} cut at {cut}");
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..200 {
        let bytes = random_envelope(&mut rng).encode();
        for cut in 0..bytes.len() {
            assert!(Envelope::decode(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn header_errors() {
    let good = golden_vector(FRAMES, "claim-result");
    let mut bad = good.clone();
    bad[0] = b'X';
    assert_eq!(Envelope::decode(&bad), Err(WireError::BadMagic));
    assert_eq!(Envelope::decode(&bad[..6]), Err(WireError::BadMagic));
    let mut bad = good.clone();
    bad[4] = 2;
    assert_eq!(Envelope::decode(&bad), Err(WireError::UnsupportedVersion(2)));
    let mut bad = good.clone();
    bad[5] = 0;
    assert_eq!(Envelope::decode(&bad), Err(WireError::UnknownMessageType(0)));
    bad[5] = 19;
    assert_eq!(Envelope::decode(&bad), Err(WireError::UnknownMessageType(19)));
    let mut bad = good.clone();
    bad[22..26].copy_from_slice(&(MAX_PAYLOAD as u32 + 1).to_be_bytes());
    assert_eq!(Envelope::decode(&bad), Err(WireError::PayloadTooLarge(MAX_PAYLOAD + 1)));
    let mut long = good.clone();
    long.push(0);
    assert_eq!(Envelope::decode(&long), Err(WireError::LengthMismatch { declared: 9, actual: 10 }));
}

#[test]
fn trailing_payload_bytes_are_refused() {
    let mut frame = golden_vector(FRAMES, "user-abort");
    frame[25] = 1;
    frame.push(0);
    assert_eq!(Envelope::decode(&frame), Err(WireError::TrailingBytes));
}

#[test]
fn invalid_utf8_in_a_string_field() {
    let mut frame = golden_vector(FRAMES, "claim-bs");
    frame[HEADER_LEN + 4] = 0xff;
    assert_eq!(Envelope::decode(&frame), Err(WireError::InvalidUtf8));
}

#[test]
fn service_key_must_be_32_bytes() {
    let mut frame = golden_vector(FRAMES, "sp-register");
    // spid "sp1" (4+3) and sname "s1" (4+2) precede the key's length prefix.
    let at = HEADER_LEN + 7 + 6;
    assert_eq!(frame[at..at + 4], 32u32.to_be_bytes());
    frame[at + 3] = 31;
    assert!(matches!(Envelope::decode(&frame), Err(WireError::LengthMismatch { declared: 31, .. })));
}

#[test]
fn mutated_frames_never_panic() {
    let t = fuzz_frames(5_000, 7);
    assert_eq!((t.panics, t.round_trip_failures, t.non_canonical), (0, 0, 0), "{t:?}");
    assert!(t.accepted > 0 && t.rejected > 0, "{t:?}");
}

fn any_kind() -> impl Strategy<Value = MessageType> {
    prop::sample::select(MessageType::ALL.to_vec())
}

proptest! {
    #[test]
    fn every_kind_round_trips(kind in any_kind(), seed in any::<u64>(), sid in any::<[u8; 16]>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let env = Envelope::new(sid, random_message(kind, &mut rng));
        let bytes = env.encode();
        prop_assert_eq!(bytes.len(), HEADER_LEN + env.message.encode_payload().len());
        prop_assert_eq!(Envelope::decode(&bytes).unwrap(), env);
    }

    #[test]
    fn arbitrary_bytes_decode_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = Envelope::decode(&bytes);
    }
}

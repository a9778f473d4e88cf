//! Helpers shared by the integration targets.
//!
//! `oracle` recomputes toy-group puzzle operations with naive modular
//! arithmetic (repeated multiplication, table discrete logs) and shares no
//! code with the library. The trial loops are sized by their callers: the
//! per-module targets run them small, `acceptance` at full size.

#![allow(dead_code)]

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sa2fe::puzzle::toy::{Toy47, ToyPairing, ToyScalar};
use sa2fe::puzzle::{
    bilinear, encode_solution, puzzle_gen, puzzle_match, puzzle_rerandomize, puzzle_setup, ur, PuzzleError,
};
use sa2fe::wire::{Envelope, FrameHeader, Message, MessageType, HEADER_LEN};
use sa2fe::{Scheme, SecurityLevel};

pub mod oracle {
    pub const P: u64 = 47;
    pub const Q: u64 = 23;
    pub const G: u64 = 2;

    pub fn pow(base: u64, exp: u64) -> u64 {
        (0..exp).fold(1, |acc, _| acc * base % P)
    }

    pub fn dlog(v: u64) -> u64 {
        (0..Q).find(|&k| pow(G, k) == v).expect("element of the subgroup")
    }

    pub fn inv_q(a: u64) -> u64 {
        (1..Q).find(|b| a * b % Q == 1).expect("nonzero scalar")
    }

    pub fn inv_p(a: u64) -> u64 {
        (1..P).find(|b| a * b % P == 1).expect("nonzero residue")
    }

    /// Non-identity members of the order-`Q` subgroup, by membership test.
    pub fn subgroup() -> Vec<u64> {
        (2..P).filter(|&v| pow(v, Q) == 1).collect()
    }

    pub fn ur_gen(y: u64, m: u64, r0: u64, r1: u64) -> [u64; 4] {
        [m * pow(y, r0) % P, pow(G, r0), pow(y, r1), pow(G, r1)]
    }

    /// Decrypts with `x`: `None` unless the second ciphertext holds the
    /// identity.
    pub fn ur_open(x: u64, z: [u64; 4]) -> Option<u64> {
        let [a0, b0, a1, b1] = z;
        if a1 * inv_p(pow(b1, x)) % P != 1 {
            return None;
        }
        Some(a0 * inv_p(pow(b0, x)) % P)
    }

    pub fn ur_rerandomize(z: [u64; 4], r0: u64, r1: u64) -> [u64; 4] {
        let [a0, b0, a1, b1] = z;
        [a0 * pow(a1, r0) % P, b0 * pow(b1, r0) % P, pow(a1, r1), pow(b1, r1)]
    }

    pub fn bm_gen(m: u64, r: u64) -> [u64; 2] {
        [pow(G, r * inv_q(m) % Q), pow(G, r)]
    }

    /// `e(g^m, z1) == e(g, z2)` with `e(g^a, g^b) = g^(ab)`.
    pub fn bm_matches(m: u64, z: [u64; 2]) -> bool {
        m * dlog(z[0]) % Q == dlog(z[1])
    }

    pub fn bm_rerandomize(z: [u64; 2], r: u64) -> [u64; 2] {
        [pow(z[0], r), pow(z[1], r)]
    }
}

#[derive(Debug, Default)]
pub struct Tally {
    pub checks: u64,
    pub mismatches: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.mismatches.len() < 20 {
            self.mismatches.push(what());
        }
    }
}

fn ur_residues(z: &ur::UrPuzzle<Toy47>) -> [u64; 4] {
    [z.alpha0.residue(), z.beta0.residue(), z.alpha1.residue(), z.beta1.residue()]
}

fn bm_residues(z: &bilinear::BilinearPuzzle<ToyPairing>) -> [u64; 2] {
    [z.z1.residue(), z.z2.residue()]
}

/// Setup, generation, matching and rerandomization of both schemes on the
/// toy group against `oracle`, for every solution element and `coins`
/// random coin choices each. Every match is tried with all 22 candidates.
pub fn toy_equivalence(coins: usize, seed: u64) -> Tally {
    use oracle::Q;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    let elements = Toy47::non_identity_elements();
    let residues: Vec<u64> = elements.iter().map(Toy47::residue).collect();
    let mut sorted = residues.clone();
    sorted.sort_unstable();
    t.check(sorted == oracle::subgroup(), || format!("element set {sorted:?}"));

    for m in &elements {
        for _ in 0..coins {
            let (params, trapdoor) = ur::setup::<Toy47, _>(&mut rng);
            let x = trapdoor.x.value();
            t.check(x != 0 && params.y.residue() == oracle::pow(oracle::G, x), || format!("ur setup x={x}"));
            let (r0, r1) = (rng.gen_range(0..Q), rng.gen_range(1..Q));
            let z = ur::gen_with_coins(&params, m, &ToyScalar::new(r0), &ToyScalar::new(r1));
            let want = oracle::ur_gen(params.y.residue(), m.residue(), r0, r1);
            t.check(ur_residues(&z) == want, || format!("ur gen m={} r=({r0},{r1})", m.residue()));
            let (s0, s1) = (rng.gen_range(0..Q), rng.gen_range(1..Q));
            let zz = ur::rerandomize_with_coins(&z, &ToyScalar::new(s0), &ToyScalar::new(s1));
            t.check(ur_residues(&zz) == oracle::ur_rerandomize(want, s0, s1), || {
                format!("ur rerandomize m={} r'=({s0},{s1})", m.residue())
            });
            let fresh = ur::gen(&params, m, &mut rng);
            for puzzle in [&z, &zz, &fresh] {
                let opened = oracle::ur_open(x, ur_residues(puzzle));
                for cand in &elements {
                    t.check(ur::matches(&trapdoor, cand, puzzle) == (opened == Some(cand.residue())), || {
                        format!("ur match m={} cand={} x={x}", m.residue(), cand.residue())
                    });
                }
            }
        }
    }

    let params = bilinear::setup::<ToyPairing>();
    t.check([params.g1.residue(), params.g2.residue()] == [oracle::G, oracle::G], || "bilinear setup".into());
    for m in 1..Q {
        let ms = ToyScalar::new(m);
        for _ in 0..coins {
            let r = rng.gen_range(1..Q);
            let z = bilinear::gen_with_coins(&params, &ms, &ToyScalar::new(r));
            let want = oracle::bm_gen(m, r);
            t.check(bm_residues(&z) == want, || format!("bilinear gen m={m} r={r}"));
            let s = rng.gen_range(1..Q);
            let zz = bilinear::rerandomize_with_coins(&z, &ToyScalar::new(s));
            t.check(bm_residues(&zz) == oracle::bm_rerandomize(want, s), || format!("bilinear rerandomize m={m} r'={s}"));
            let fresh = bilinear::gen(&params, &ms, &mut rng);
            for puzzle in [&z, &zz, &fresh] {
                let zr = bm_residues(puzzle);
                for cand in 1..Q {
                    t.check(
                        bilinear::matches(&params, &ToyScalar::new(cand), puzzle) == oracle::bm_matches(cand, zr),
                        || format!("bilinear match m={m} cand={cand} z={zr:?}"),
                    );
                }
            }
        }
    }
    t
}

fn random_digest(rng: &mut impl RngCore) -> [u8; 32] {
    let mut d = [0u8; 32];
    rng.fill_bytes(&mut d);
    d
}

/// Matches `trials` fresh puzzles against a random different solution at
/// the 128-bit level. Returns how many matched.
pub fn false_positives(scheme: Scheme, trials: u64, seed: u64) -> Result<u64, PuzzleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (params, trapdoor) = puzzle_setup(scheme, SecurityLevel::Bits128, &mut rng)?;
    let mut hits = 0;
    for _ in 0..trials {
        let right = random_digest(&mut rng);
        let wrong = loop {
            let d = random_digest(&mut rng);
            if d != right {
                break d;
            }
        };
        let z = puzzle_gen(&params, &encode_solution(&right, &params), &mut rng)?;
        if puzzle_match(&params, &trapdoor, &encode_solution(&wrong, &params), &z)? {
            hits += 1;
        }
    }
    Ok(hits)
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct ChainTally {
    pub links: u64,
    pub unmatched: u64,
    pub repeated: u64,
}

/// `chains` puzzles, each rerandomized `depth` times in sequence. Every link
/// must still match its solution, and no puzzle encoding may occur twice
/// anywhere across all chains.
pub fn rerandomization_chains(scheme: Scheme, chains: u64, depth: u32, seed: u64) -> Result<ChainTally, PuzzleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (params, trapdoor) = puzzle_setup(scheme, SecurityLevel::Bits128, &mut rng)?;
    let mut seen = HashSet::new();
    let mut t = ChainTally::default();
    for _ in 0..chains {
        let m = encode_solution(&random_digest(&mut rng), &params);
        let mut z = puzzle_gen(&params, &m, &mut rng)?;
        if !seen.insert(z.to_bytes()) {
            t.repeated += 1;
        }
        for _ in 0..depth {
            z = puzzle_rerandomize(&params, &z, &mut rng)?;
            t.links += 1;
            if !puzzle_match(&params, &trapdoor, &m, &z)? {
                t.unmatched += 1;
            }
            if !seen.insert(z.to_bytes()) {
                t.repeated += 1;
            }
        }
    }
    Ok(t)
}

fn bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let mut v = vec![0u8; rng.gen_range(0..=max)];
    rng.fill_bytes(&mut v);
    v
}

fn text(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..12);
    let accent = rng.gen_ratio(1, 8).then_some('é');
    (0..len).map(|_| rng.gen_range('a'..='z')).chain(accent).collect()
}

fn key(rng: &mut impl Rng) -> [u8; 32] {
    rng.gen()
}

/// A message of the given kind with random field contents.
pub fn random_message(kind: MessageType, rng: &mut impl Rng) -> Message {
    match kind {
        MessageType::SpRegister => Message::SpRegister {
            spid: text(rng),
            sname: text(rng),
            service_key: key(rng),
            public_key: bytes(rng, 64),
            secret_key: bytes(rng, 64),
        },
        MessageType::EsRegisterRequest => {
            Message::EsRegisterRequest { esid: text(rng), reg_info: bytes(rng, 32), s_type: text(rng) }
        }
        MessageType::EsCredentials => Message::EsCredentials {
            status: rng.gen(),
            s_type: text(rng),
            service_key: key(rng),
            public_key: bytes(rng, 64),
            workload: text(rng),
            puzzle_params: bytes(rng, 40),
            trapdoor: bytes(rng, 40),
        },
        MessageType::EsPuzzleRegister => {
            Message::EsPuzzleRegister { esid: text(rng), slot: rng.gen(), puzzle: bytes(rng, 200) }
        }
        MessageType::TokenRequest => Message::TokenRequest {
            s_type: text(rng),
            blinded_agnostic: bytes(rng, 64),
            blinded_specific: bytes(rng, 64),
            payment: bytes(rng, 16),
        },
        MessageType::TokenIssue => Message::TokenIssue {
            status: rng.gen(),
            blind_sig_agnostic: bytes(rng, 64),
            blind_sig_specific: bytes(rng, 64),
            service_key: key(rng),
            service_public_key: bytes(rng, 64),
            puzzle_params: bytes(rng, 40),
            trapdoor: bytes(rng, 40),
        },
        MessageType::OffloadInit => Message::OffloadInit { token: bytes(rng, 128) },
        MessageType::PuzzleList => {
            let n = rng.gen_range(0..6);
            Message::PuzzleList { version: rng.gen(), puzzles: (0..n).map(|_| bytes(rng, 40)).collect() }
        }
        MessageType::OffloadRequest => {
            Message::OffloadRequest { token: bytes(rng, 128), puzzle: bytes(rng, 40), ciphertext: bytes(rng, 64) }
        }
        MessageType::UserAbort => Message::UserAbort,
        MessageType::ForwardToEs => Message::ForwardToEs { token: bytes(rng, 128), ciphertext: bytes(rng, 64) },
        MessageType::EsResponse => Message::EsResponse { ciphertext: bytes(rng, 64) },
        MessageType::ResponseToUser => Message::ResponseToUser { ciphertext: bytes(rng, 64) },
        MessageType::ClaimBs => Message::ClaimBs { bsid: text(rng), token: bytes(rng, 128) },
        MessageType::ClaimEs => Message::ClaimEs { esid: text(rng), s_type: text(rng), token: bytes(rng, 128) },
        MessageType::ClaimResult => Message::ClaimResult { status: rng.gen(), amount: rng.gen() },
        MessageType::Ack => Message::Ack { status: rng.gen(), detail: bytes(rng, 16) },
        MessageType::Reject => Message::Reject { reason: rng.gen(), detail: text(rng) },
    }
}

pub fn random_envelope(rng: &mut impl Rng) -> Envelope {
    let kind = MessageType::ALL[rng.gen_range(0..MessageType::ALL.len())];
    Envelope::new(rng.gen(), random_message(kind, rng))
}

/// One random corruption of a frame.
fn mutate(frame: &mut Vec<u8>, rng: &mut impl Rng) {
    match rng.gen_range(0..7) {
        0 => {
            let i = rng.gen_range(0..frame.len());
            frame[i] ^= 1 << rng.gen_range(0..8);
        }
        1 => {
            let i = rng.gen_range(0..frame.len());
            frame[i] = rng.gen();
        }
        2 => frame.truncate(rng.gen_range(0..frame.len())),
        3 => {
            let extra = bytes(rng, 8);
            let at = rng.gen_range(0..=frame.len());
            frame.splice(at..at, extra);
        }
        4 => {
            // Land a random length on a 4-byte boundary, where prefixes live.
            let i = rng.gen_range(0..frame.len());
            let v: u32 = if rng.gen() { rng.gen() } else { rng.gen_range(0..300) };
            for (k, b) in v.to_be_bytes().into_iter().enumerate() {
                if let Some(slot) = frame.get_mut(i + k) {
                    *slot = b;
                }
            }
        }
        5 => {
            // Valid header, random type byte.
            if frame.len() > 5 {
                frame[5] = rng.gen();
            }
        }
        _ => {
            let i = rng.gen_range(0..frame.len());
            let j = rng.gen_range(i..=frame.len());
            frame.drain(i..j);
        }
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct FuzzTally {
    pub frames: u64,
    /// Valid frames whose decode did not return the original envelope.
    pub round_trip_failures: u64,
    /// Mutated frames on which decoding panicked (including out-of-bounds
    /// slicing).
    pub panics: u64,
    /// Mutated frames that decoded and re-encoded to different bytes.
    pub non_canonical: u64,
    pub accepted: u64,
    pub rejected: u64,
}

/// Encodes `frames` random envelopes, checks each round-trips, then decodes
/// a corrupted copy of each through both decoding paths.
pub fn fuzz_frames(frames: u64, seed: u64) -> FuzzTally {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut t = FuzzTally::default();
    for _ in 0..frames {
        let env = random_envelope(&mut rng);
        let good = env.encode();
        if Envelope::decode(&good).as_ref() != Ok(&env) {
            t.round_trip_failures += 1;
        }
        let mut bad = good.clone();
        for _ in 0..rng.gen_range(1..=3) {
            if bad.is_empty() {
                break;
            }
            mutate(&mut bad, &mut rng);
        }
        t.frames += 1;
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let whole = Envelope::decode(&bad);
            // The streaming path: header first, then exactly `payload_len`
            // bytes. Hand it only that slice so any read past it would fault.
            let streamed = (bad.len() >= HEADER_LEN).then(|| {
                let header = FrameHeader::parse(bad[..HEADER_LEN].try_into().unwrap())?;
                let payload = bad.get(HEADER_LEN..HEADER_LEN + header.payload_len).ok_or(sa2fe::wire::WireError::Truncated)?;
                Envelope::from_parts(&header, payload)
            });
            (whole, streamed)
        }));
        match outcome {
            Err(_) => t.panics += 1,
            Ok((Ok(decoded), _)) => {
                t.accepted += 1;
                if decoded.encode() != bad {
                    t.non_canonical += 1;
                }
            }
            Ok((Err(_), _)) => t.rejected += 1,
        }
    }
    t
}

/// Reads `tests/golden/<file>`: `name hex` per line, `#` comments.
pub fn golden(file: &str) -> Vec<(String, Vec<u8>)> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file);
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, hex) = l.split_once(' ').expect("`name hex`");
            (name.to_owned(), hex::decode(hex.trim()).expect("hex"))
        })
        .collect()
}

pub fn golden_vector(file: &str, name: &str) -> Vec<u8> {
    golden(file).into_iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no vector `{name}` in {file}")).1
}

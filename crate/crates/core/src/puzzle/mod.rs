//! Rerandomizable puzzles.
//!
//! A puzzle commits to a solution (here always a digest of a service key).
//! Key holders can test whether a candidate solution opens it, and anyone can
//! rerandomize it into a fresh, unlinkable puzzle with the same solution.
//!
//! Two constructions sit behind one interface:
//!
//! * [`Scheme::BilinearMap`] on BLS12-381 (no trapdoor, the pairing does the
//!   check);
//! * [`Scheme::UniversalReenc`], ElGamal universal re-encryption on
//!   Ristretto255 (128-bit) or P-384 (192-bit); matching needs the trapdoor
//!   exponent `x`.
//!
//! With the `insecure-test` feature both constructions are also available on
//! a tiny Schnorr group (`q = 23`) for oracle tests.
//!
//! Canonical puzzle bytes are `scheme tag || security level || elements`,
//! with the element count and width fixed by the scheme and level.

pub mod bilinear;
pub mod curves;
pub mod group;
#[cfg(feature = "insecure-test")]
pub mod toy;
pub mod ur;

use std::fmt;
use std::str::FromStr;

use curve25519_dalek::ristretto::RistrettoPoint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::bilinear::{BilinearParams, BilinearPuzzle};
use self::curves::Bls12;
use self::group::{FieldScalar, PrimeOrderGroup};
#[cfg(feature = "insecure-test")]
use self::toy::{Toy47, ToyPairing, ToyScalar};
use self::ur::{UrParams, UrPuzzle, UrTrapdoor};

type P384Point = p384::ProjectivePoint;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PuzzleError {
    #[error("security level {bits} is not supported by the {scheme} scheme")]
    UnsupportedSecurityLevel { scheme: Scheme, bits: u16 },
    #[error("arguments belong to different puzzle schemes or security levels")]
    SchemeMismatch,
    #[error("matching a re-encryption puzzle requires the trapdoor")]
    MissingTrapdoor,
    #[error("expected {expected} bytes, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("unknown scheme tag {0:#04x}")]
    UnknownScheme(u8),
    #[error("unknown security level code {0:#04x}")]
    UnknownSecurityLevel(u8),
    #[error("encoding contains a value outside the prime-order group")]
    InvalidElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BilinearMap,
    UniversalReenc,
}

impl Scheme {
    pub fn tag(self) -> u8 {
        match self {
            Scheme::BilinearMap => 0x01,
            Scheme::UniversalReenc => 0x02,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, PuzzleError> {
        match tag {
            0x01 => Ok(Scheme::BilinearMap),
            0x02 => Ok(Scheme::UniversalReenc),
            other => Err(PuzzleError::UnknownScheme(other)),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::BilinearMap => "bilinear",
            Scheme::UniversalReenc => "universal-reenc",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilinear" | "bilinear-map" | "bm" => Ok(Scheme::BilinearMap),
            "universal-reenc" | "ur" | "universal-re-encryption" => Ok(Scheme::UniversalReenc),
            other => Err(format!("unknown puzzle scheme `{other}` (expected `bilinear` or `universal-reenc`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum SecurityLevel {
    Bits128,
    Bits192,
    /// The 23-element test group. Only constructible with `insecure-test`.
    #[cfg(feature = "insecure-test")]
    Toy,
}

impl SecurityLevel {
    pub fn bits(self) -> u16 {
        match self {
            SecurityLevel::Bits128 => 128,
            SecurityLevel::Bits192 => 192,
            #[cfg(feature = "insecure-test")]
            SecurityLevel::Toy => 0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SecurityLevel::Bits128 => 128,
            SecurityLevel::Bits192 => 192,
            #[cfg(feature = "insecure-test")]
            SecurityLevel::Toy => 0,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, PuzzleError> {
        match code {
            128 => Ok(SecurityLevel::Bits128),
            192 => Ok(SecurityLevel::Bits192),
            #[cfg(feature = "insecure-test")]
            0 => Ok(SecurityLevel::Toy),
            other => Err(PuzzleError::UnknownSecurityLevel(other)),
        }
    }
}

impl TryFrom<u16> for SecurityLevel {
    type Error = String;

    fn try_from(bits: u16) -> Result<Self, Self::Error> {
        match bits {
            128 => Ok(SecurityLevel::Bits128),
            192 => Ok(SecurityLevel::Bits192),
            #[cfg(feature = "insecure-test")]
            0 => Ok(SecurityLevel::Toy),
            other => Err(format!("unsupported security level {other} (expected 128 or 192)")),
        }
    }
}

impl From<SecurityLevel> for u16 {
    fn from(level: SecurityLevel) -> u16 {
        level.bits()
    }
}

/// Concrete group instantiation for a `(scheme, level)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Backend {
    UrRistretto,
    UrP384,
    BilinearBls12,
    #[cfg(feature = "insecure-test")]
    UrToy,
    #[cfg(feature = "insecure-test")]
    BilinearToy,
}

impl Backend {
    fn select(scheme: Scheme, level: SecurityLevel) -> Result<Self, PuzzleError> {
        match (scheme, level) {
            (Scheme::UniversalReenc, SecurityLevel::Bits128) => Ok(Backend::UrRistretto),
            (Scheme::UniversalReenc, SecurityLevel::Bits192) => Ok(Backend::UrP384),
            (Scheme::BilinearMap, SecurityLevel::Bits128) => Ok(Backend::BilinearBls12),
            (Scheme::BilinearMap, SecurityLevel::Bits192) => {
                Err(PuzzleError::UnsupportedSecurityLevel { scheme, bits: 192 })
            }
            #[cfg(feature = "insecure-test")]
            (Scheme::UniversalReenc, SecurityLevel::Toy) => Ok(Backend::UrToy),
            #[cfg(feature = "insecure-test")]
            (Scheme::BilinearMap, SecurityLevel::Toy) => Ok(Backend::BilinearToy),
        }
    }

    fn scheme(self) -> Scheme {
        match self {
            Backend::UrRistretto | Backend::UrP384 => Scheme::UniversalReenc,
            Backend::BilinearBls12 => Scheme::BilinearMap,
            #[cfg(feature = "insecure-test")]
            Backend::UrToy => Scheme::UniversalReenc,
            #[cfg(feature = "insecure-test")]
            Backend::BilinearToy => Scheme::BilinearMap,
        }
    }

    fn level(self) -> SecurityLevel {
        match self {
            Backend::UrRistretto | Backend::BilinearBls12 => SecurityLevel::Bits128,
            Backend::UrP384 => SecurityLevel::Bits192,
            #[cfg(feature = "insecure-test")]
            Backend::UrToy | Backend::BilinearToy => SecurityLevel::Toy,
        }
    }

    fn puzzle_body_len(self) -> usize {
        match self {
            Backend::UrRistretto => 4 * <RistrettoPoint as PrimeOrderGroup>::ENCODED_LEN,
            Backend::UrP384 => 4 * <P384Point as PrimeOrderGroup>::ENCODED_LEN,
            Backend::BilinearBls12 => 2 * <bls12_381::G2Projective as PrimeOrderGroup>::ENCODED_LEN,
            #[cfg(feature = "insecure-test")]
            Backend::UrToy => 4 * <Toy47 as PrimeOrderGroup>::ENCODED_LEN,
            #[cfg(feature = "insecure-test")]
            Backend::BilinearToy => 2 * <Toy47 as PrimeOrderGroup>::ENCODED_LEN,
        }
    }

    fn header(self) -> [u8; 2] {
        [self.scheme().tag(), self.level().code()]
    }

    fn parse_header(bytes: &[u8]) -> Result<(Self, &[u8]), PuzzleError> {
        if bytes.len() < 2 {
            return Err(PuzzleError::WrongLength { expected: 2, actual: bytes.len() });
        }
        let scheme = Scheme::from_tag(bytes[0])?;
        let level = SecurityLevel::from_code(bytes[1])?;
        Ok((Self::select(scheme, level)?, &bytes[2..]))
    }
}

/// Public puzzle parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum PuzzleParams {
    UrRistretto(UrParams<RistrettoPoint>),
    UrP384(UrParams<P384Point>),
    BilinearBls12(BilinearParams<Bls12>),
    #[cfg(feature = "insecure-test")]
    UrToy(UrParams<Toy47>),
    #[cfg(feature = "insecure-test")]
    BilinearToy(BilinearParams<ToyPairing>),
}

/// Secret matching exponent for the re-encryption scheme; empty for the
/// pairing scheme, whose check is public.
#[derive(Debug, Clone, PartialEq)]
pub enum PuzzleTrapdoor {
    Empty { scheme: Scheme, level: SecurityLevel },
    UrRistretto(UrTrapdoor<RistrettoPoint>),
    UrP384(UrTrapdoor<P384Point>),
    #[cfg(feature = "insecure-test")]
    UrToy(UrTrapdoor<Toy47>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodedSolution {
    UrRistretto(RistrettoPoint),
    UrP384(P384Point),
    BilinearBls12(bls12_381::Scalar),
    #[cfg(feature = "insecure-test")]
    UrToy(Toy47),
    #[cfg(feature = "insecure-test")]
    BilinearToy(ToyScalar<23>),
}

/// A puzzle solution: the raw digest plus its group encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct PuzzleSolution {
    pub digest: [u8; 32],
    pub encoded: EncodedSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Puzzle {
    UrRistretto(UrPuzzle<RistrettoPoint>),
    UrP384(UrPuzzle<P384Point>),
    BilinearBls12(BilinearPuzzle<Bls12>),
    #[cfg(feature = "insecure-test")]
    UrToy(UrPuzzle<Toy47>),
    #[cfg(feature = "insecure-test")]
    BilinearToy(BilinearPuzzle<ToyPairing>),
}

impl PuzzleParams {
    fn backend(&self) -> Backend {
        match self {
            PuzzleParams::UrRistretto(_) => Backend::UrRistretto,
            PuzzleParams::UrP384(_) => Backend::UrP384,
            PuzzleParams::BilinearBls12(_) => Backend::BilinearBls12,
            #[cfg(feature = "insecure-test")]
            PuzzleParams::UrToy(_) => Backend::UrToy,
            #[cfg(feature = "insecure-test")]
            PuzzleParams::BilinearToy(_) => Backend::BilinearToy,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.backend().scheme()
    }

    pub fn security_level(&self) -> SecurityLevel {
        self.backend().level()
    }

    /// Length of every serialized puzzle under these parameters.
    pub fn puzzle_len(&self) -> usize {
        2 + self.backend().puzzle_body_len()
    }

    /// `tag || level || y` for re-encryption, `tag || level || g1 || g2`
    /// for the pairing scheme.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.backend().header().to_vec();
        match self {
            PuzzleParams::UrRistretto(p) => out.extend(p.y.to_bytes()),
            PuzzleParams::UrP384(p) => out.extend(p.y.to_bytes()),
            PuzzleParams::BilinearBls12(p) => {
                out.extend(p.g1.to_bytes());
                out.extend(p.g2.to_bytes());
            }
            #[cfg(feature = "insecure-test")]
            PuzzleParams::UrToy(p) => out.extend(p.y.to_bytes()),
            #[cfg(feature = "insecure-test")]
            PuzzleParams::BilinearToy(p) => {
                out.extend(p.g1.to_bytes());
                out.extend(p.g2.to_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PuzzleError> {
        let (backend, body) = Backend::parse_header(bytes)?;
        fn element<G: PrimeOrderGroup>(b: &[u8]) -> Result<G, PuzzleError> {
            if b.len() != G::ENCODED_LEN {
                return Err(PuzzleError::WrongLength { expected: G::ENCODED_LEN, actual: b.len() });
            }
            let e = G::from_bytes(b).ok_or(PuzzleError::InvalidElement)?;
            if e.is_identity() {
                return Err(PuzzleError::InvalidElement);
            }
            Ok(e)
        }
        fn pair<G1: PrimeOrderGroup, G2: PrimeOrderGroup>(b: &[u8]) -> Result<(G1, G2), PuzzleError> {
            let expected = G1::ENCODED_LEN + G2::ENCODED_LEN;
            if b.len() != expected {
                return Err(PuzzleError::WrongLength { expected, actual: b.len() });
            }
            Ok((element(&b[..G1::ENCODED_LEN])?, element(&b[G1::ENCODED_LEN..])?))
        }
        Ok(match backend {
            Backend::UrRistretto => PuzzleParams::UrRistretto(UrParams { y: element(body)? }),
            Backend::UrP384 => PuzzleParams::UrP384(UrParams { y: element(body)? }),
            Backend::BilinearBls12 => {
                let (g1, g2) = pair(body)?;
                PuzzleParams::BilinearBls12(BilinearParams { g1, g2 })
            }
            #[cfg(feature = "insecure-test")]
            Backend::UrToy => PuzzleParams::UrToy(UrParams { y: element(body)? }),
            #[cfg(feature = "insecure-test")]
            Backend::BilinearToy => {
                let (g1, g2) = pair(body)?;
                PuzzleParams::BilinearToy(BilinearParams { g1, g2 })
            }
        })
    }
}

impl PuzzleTrapdoor {
    fn backend(&self) -> Result<Backend, PuzzleError> {
        match self {
            PuzzleTrapdoor::Empty { scheme, level } => Backend::select(*scheme, *level),
            PuzzleTrapdoor::UrRistretto(_) => Ok(Backend::UrRistretto),
            PuzzleTrapdoor::UrP384(_) => Ok(Backend::UrP384),
            #[cfg(feature = "insecure-test")]
            PuzzleTrapdoor::UrToy(_) => Ok(Backend::UrToy),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, PuzzleTrapdoor::Empty { .. })
    }

    /// `tag || level || x` (no `x` for an empty trapdoor).
    pub fn to_bytes(&self) -> Vec<u8> {
        let (scheme, level) = match self.backend() {
            Ok(b) => (b.scheme(), b.level()),
            Err(_) => match self {
                PuzzleTrapdoor::Empty { scheme, level } => (*scheme, *level),
                _ => unreachable!("non-empty trapdoors always have a backend"),
            },
        };
        let mut out = vec![scheme.tag(), level.code()];
        match self {
            PuzzleTrapdoor::Empty { .. } => {}
            PuzzleTrapdoor::UrRistretto(t) => out.extend(t.x.to_bytes()),
            PuzzleTrapdoor::UrP384(t) => out.extend(t.x.to_bytes()),
            #[cfg(feature = "insecure-test")]
            PuzzleTrapdoor::UrToy(t) => out.extend(t.x.to_bytes()),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PuzzleError> {
        let (backend, body) = Backend::parse_header(bytes)?;
        fn scalar<S: FieldScalar>(b: &[u8]) -> Result<S, PuzzleError> {
            if b.len() != S::ENCODED_LEN {
                return Err(PuzzleError::WrongLength { expected: S::ENCODED_LEN, actual: b.len() });
            }
            S::from_bytes(b).ok_or(PuzzleError::InvalidElement)
        }
        Ok(match backend {
            Backend::UrRistretto => PuzzleTrapdoor::UrRistretto(UrTrapdoor { x: scalar(body)? }),
            Backend::UrP384 => PuzzleTrapdoor::UrP384(UrTrapdoor { x: scalar(body)? }),
            #[cfg(feature = "insecure-test")]
            Backend::UrToy => PuzzleTrapdoor::UrToy(UrTrapdoor { x: scalar(body)? }),
            other => {
                if !body.is_empty() {
                    return Err(PuzzleError::WrongLength { expected: 2, actual: bytes.len() });
                }
                PuzzleTrapdoor::Empty { scheme: other.scheme(), level: other.level() }
            }
        })
    }
}

impl PuzzleSolution {
    fn backend(&self) -> Backend {
        match self.encoded {
            EncodedSolution::UrRistretto(_) => Backend::UrRistretto,
            EncodedSolution::UrP384(_) => Backend::UrP384,
            EncodedSolution::BilinearBls12(_) => Backend::BilinearBls12,
            #[cfg(feature = "insecure-test")]
            EncodedSolution::UrToy(_) => Backend::UrToy,
            #[cfg(feature = "insecure-test")]
            EncodedSolution::BilinearToy(_) => Backend::BilinearToy,
        }
    }
}

impl Puzzle {
    fn backend(&self) -> Backend {
        match self {
            Puzzle::UrRistretto(_) => Backend::UrRistretto,
            Puzzle::UrP384(_) => Backend::UrP384,
            Puzzle::BilinearBls12(_) => Backend::BilinearBls12,
            #[cfg(feature = "insecure-test")]
            Puzzle::UrToy(_) => Backend::UrToy,
            #[cfg(feature = "insecure-test")]
            Puzzle::BilinearToy(_) => Backend::BilinearToy,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.backend().scheme()
    }

    pub fn security_level(&self) -> SecurityLevel {
        self.backend().level()
    }

    /// Canonical fixed-length encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.backend().header().to_vec();
        match self {
            Puzzle::UrRistretto(p) => out.extend(p.to_bytes()),
            Puzzle::UrP384(p) => out.extend(p.to_bytes()),
            Puzzle::BilinearBls12(p) => out.extend(p.to_bytes()),
            #[cfg(feature = "insecure-test")]
            Puzzle::UrToy(p) => out.extend(p.to_bytes()),
            #[cfg(feature = "insecure-test")]
            Puzzle::BilinearToy(p) => out.extend(p.to_bytes()),
        }
        out
    }

    /// Decodes a puzzle produced under `params`, enforcing group membership
    /// of every component.
    pub fn from_bytes(bytes: &[u8], params: &PuzzleParams) -> Result<Self, PuzzleError> {
        let expected = params.puzzle_len();
        if bytes.len() != expected {
            return Err(PuzzleError::WrongLength { expected, actual: bytes.len() });
        }
        let (backend, body) = Backend::parse_header(bytes)?;
        if backend != params.backend() {
            return Err(PuzzleError::SchemeMismatch);
        }
        let puzzle = match backend {
            Backend::UrRistretto => UrPuzzle::from_bytes(body).map(Puzzle::UrRistretto),
            Backend::UrP384 => UrPuzzle::from_bytes(body).map(Puzzle::UrP384),
            Backend::BilinearBls12 => BilinearPuzzle::from_bytes(body).map(Puzzle::BilinearBls12),
            #[cfg(feature = "insecure-test")]
            Backend::UrToy => UrPuzzle::from_bytes(body).map(Puzzle::UrToy),
            #[cfg(feature = "insecure-test")]
            Backend::BilinearToy => BilinearPuzzle::from_bytes(body).map(Puzzle::BilinearToy),
        };
        puzzle.ok_or(PuzzleError::InvalidElement)
    }
}

/// Generates parameters and (for re-encryption) the matching trapdoor.
pub fn puzzle_setup<R: RngCore + CryptoRng>(
    scheme: Scheme,
    level: SecurityLevel,
    rng: &mut R,
) -> Result<(PuzzleParams, PuzzleTrapdoor), PuzzleError> {
    Ok(match Backend::select(scheme, level)? {
        Backend::UrRistretto => {
            let (p, t) = ur::setup(rng);
            (PuzzleParams::UrRistretto(p), PuzzleTrapdoor::UrRistretto(t))
        }
        Backend::UrP384 => {
            let (p, t) = ur::setup(rng);
            (PuzzleParams::UrP384(p), PuzzleTrapdoor::UrP384(t))
        }
        Backend::BilinearBls12 => (
            PuzzleParams::BilinearBls12(bilinear::setup()),
            PuzzleTrapdoor::Empty { scheme, level },
        ),
        #[cfg(feature = "insecure-test")]
        Backend::UrToy => {
            let (p, t) = ur::setup(rng);
            (PuzzleParams::UrToy(p), PuzzleTrapdoor::UrToy(t))
        }
        #[cfg(feature = "insecure-test")]
        Backend::BilinearToy => (
            PuzzleParams::BilinearToy(bilinear::setup()),
            PuzzleTrapdoor::Empty { scheme, level },
        ),
    })
}

/// Maps a 32-byte digest to a solution under `params`.
pub fn encode_solution(digest: &[u8; 32], params: &PuzzleParams) -> PuzzleSolution {
    let encoded = match params.backend() {
        Backend::UrRistretto => EncodedSolution::UrRistretto(ur::encode_solution(digest)),
        Backend::UrP384 => EncodedSolution::UrP384(ur::encode_solution(digest)),
        Backend::BilinearBls12 => EncodedSolution::BilinearBls12(bilinear::encode_solution::<Bls12>(digest)),
        #[cfg(feature = "insecure-test")]
        Backend::UrToy => EncodedSolution::UrToy(ur::encode_solution(digest)),
        #[cfg(feature = "insecure-test")]
        Backend::BilinearToy => EncodedSolution::BilinearToy(bilinear::encode_solution::<ToyPairing>(digest)),
    };
    PuzzleSolution { digest: *digest, encoded }
}

pub fn puzzle_gen<R: RngCore + CryptoRng>(
    params: &PuzzleParams,
    solution: &PuzzleSolution,
    rng: &mut R,
) -> Result<Puzzle, PuzzleError> {
    Ok(match (params, &solution.encoded) {
        (PuzzleParams::UrRistretto(p), EncodedSolution::UrRistretto(m)) => Puzzle::UrRistretto(ur::gen(p, m, rng)),
        (PuzzleParams::UrP384(p), EncodedSolution::UrP384(m)) => Puzzle::UrP384(ur::gen(p, m, rng)),
        (PuzzleParams::BilinearBls12(p), EncodedSolution::BilinearBls12(m)) => {
            Puzzle::BilinearBls12(bilinear::gen(p, m, rng))
        }
        #[cfg(feature = "insecure-test")]
        (PuzzleParams::UrToy(p), EncodedSolution::UrToy(m)) => Puzzle::UrToy(ur::gen(p, m, rng)),
        #[cfg(feature = "insecure-test")]
        (PuzzleParams::BilinearToy(p), EncodedSolution::BilinearToy(m)) => {
            Puzzle::BilinearToy(bilinear::gen(p, m, rng))
        }
        _ => return Err(PuzzleError::SchemeMismatch),
    })
}

/// Whether `solution` opens `puzzle`.
pub fn puzzle_match(
    params: &PuzzleParams,
    trapdoor: &PuzzleTrapdoor,
    solution: &PuzzleSolution,
    puzzle: &Puzzle,
) -> Result<bool, PuzzleError> {
    let backend = params.backend();
    if solution.backend() != backend || puzzle.backend() != backend {
        return Err(PuzzleError::SchemeMismatch);
    }
    if trapdoor.backend()? != backend {
        return Err(PuzzleError::SchemeMismatch);
    }
    Ok(match (params, trapdoor, &solution.encoded, puzzle) {
        (PuzzleParams::UrRistretto(_), PuzzleTrapdoor::UrRistretto(t), EncodedSolution::UrRistretto(m), Puzzle::UrRistretto(z)) => {
            ur::matches(t, m, z)
        }
        (PuzzleParams::UrP384(_), PuzzleTrapdoor::UrP384(t), EncodedSolution::UrP384(m), Puzzle::UrP384(z)) => {
            ur::matches(t, m, z)
        }
        (PuzzleParams::BilinearBls12(p), _, EncodedSolution::BilinearBls12(m), Puzzle::BilinearBls12(z)) => {
            bilinear::matches(p, m, z)
        }
        #[cfg(feature = "insecure-test")]
        (PuzzleParams::UrToy(_), PuzzleTrapdoor::UrToy(t), EncodedSolution::UrToy(m), Puzzle::UrToy(z)) => {
            ur::matches(t, m, z)
        }
        #[cfg(feature = "insecure-test")]
        (PuzzleParams::BilinearToy(p), _, EncodedSolution::BilinearToy(m), Puzzle::BilinearToy(z)) => {
            bilinear::matches(p, m, z)
        }
        // Backends agree, so the only remaining case is a re-encryption
        // puzzle checked with an empty trapdoor.
        _ => return Err(PuzzleError::MissingTrapdoor),
    })
}

/// Refreshes `puzzle` into an unlinkable puzzle with the same solution.
pub fn puzzle_rerandomize<R: RngCore + CryptoRng>(
    params: &PuzzleParams,
    puzzle: &Puzzle,
    rng: &mut R,
) -> Result<Puzzle, PuzzleError> {
    if params.backend() != puzzle.backend() {
        return Err(PuzzleError::SchemeMismatch);
    }
    Ok(match puzzle {
        Puzzle::UrRistretto(z) => Puzzle::UrRistretto(ur::rerandomize(z, rng)),
        Puzzle::UrP384(z) => Puzzle::UrP384(ur::rerandomize(z, rng)),
        Puzzle::BilinearBls12(z) => Puzzle::BilinearBls12(bilinear::rerandomize(z, rng)),
        #[cfg(feature = "insecure-test")]
        Puzzle::UrToy(z) => Puzzle::UrToy(ur::rerandomize(z, rng)),
        #[cfg(feature = "insecure-test")]
        Puzzle::BilinearToy(z) => Puzzle::BilinearToy(bilinear::rerandomize(z, rng)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn schemes() -> Vec<(Scheme, SecurityLevel)> {
        vec![
            (Scheme::UniversalReenc, SecurityLevel::Bits128),
            (Scheme::UniversalReenc, SecurityLevel::Bits192),
            (Scheme::BilinearMap, SecurityLevel::Bits128),
            (Scheme::UniversalReenc, SecurityLevel::Toy),
            (Scheme::BilinearMap, SecurityLevel::Toy),
        ]
    }

    #[test]
    fn ur_setup_publishes_g_to_the_trapdoor() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (params, trapdoor) = puzzle_setup(Scheme::UniversalReenc, SecurityLevel::Bits128, &mut rng).unwrap();
        match (params, trapdoor) {
            (PuzzleParams::UrRistretto(p), PuzzleTrapdoor::UrRistretto(t)) => {
                assert_eq!(RistrettoPoint::generator().pow(&t.x), p.y);
            }
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn bilinear_setup_has_empty_trapdoor() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, trapdoor) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits128, &mut rng).unwrap();
        assert!(trapdoor.is_empty());
    }

    #[test]
    fn bilinear_192_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits192, &mut rng).unwrap_err(),
            PuzzleError::UnsupportedSecurityLevel { scheme: Scheme::BilinearMap, bits: 192 }
        );
        assert!(SecurityLevel::try_from(256).is_err());
    }

    #[test]
    fn gen_match_rerandomize_for_every_backend() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for (scheme, level) in schemes() {
            let (params, trapdoor) = puzzle_setup(scheme, level, &mut rng).unwrap();
            let m = encode_solution(&[3u8; 32], &params);
            let other = encode_solution(&[4u8; 32], &params);
            let z = puzzle_gen(&params, &m, &mut rng).unwrap();
            assert!(puzzle_match(&params, &trapdoor, &m, &z).unwrap(), "{scheme} {level:?}");
            let z2 = puzzle_rerandomize(&params, &z, &mut rng).unwrap();
            assert!(puzzle_match(&params, &trapdoor, &m, &z2).unwrap());
            if level != SecurityLevel::Toy {
                assert!(!puzzle_match(&params, &trapdoor, &other, &z2).unwrap());
                assert_ne!(z.to_bytes(), z2.to_bytes());
            }
            let bytes = z2.to_bytes();
            assert_eq!(bytes.len(), params.puzzle_len());
            assert_eq!(Puzzle::from_bytes(&bytes, &params).unwrap(), z2);
            assert_eq!(PuzzleParams::from_bytes(&params.to_bytes()).unwrap(), params);
            assert_eq!(PuzzleTrapdoor::from_bytes(&trapdoor.to_bytes()).unwrap(), trapdoor);
        }
    }

    #[test]
    fn all_zero_digest_bilinear_remaps_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (params, _) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits128, &mut rng).unwrap();
        let s = encode_solution(&[0u8; 32], &params);
        assert_eq!(s.encoded, EncodedSolution::BilinearBls12(bls12_381::Scalar::one()));
        assert_eq!(s, encode_solution(&[0u8; 32], &params));
    }

    #[test]
    fn ur_match_without_trapdoor_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (params, _) = puzzle_setup(Scheme::UniversalReenc, SecurityLevel::Bits128, &mut rng).unwrap();
        let m = encode_solution(&[1u8; 32], &params);
        let z = puzzle_gen(&params, &m, &mut rng).unwrap();
        let empty = PuzzleTrapdoor::Empty { scheme: Scheme::UniversalReenc, level: SecurityLevel::Bits128 };
        assert_eq!(puzzle_match(&params, &empty, &m, &z), Err(PuzzleError::MissingTrapdoor));
    }

    #[test]
    fn mixing_schemes_is_an_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (ur_params, ur_trap) = puzzle_setup(Scheme::UniversalReenc, SecurityLevel::Bits128, &mut rng).unwrap();
        let (bm_params, _) = puzzle_setup(Scheme::BilinearMap, SecurityLevel::Bits128, &mut rng).unwrap();
        let bm_solution = encode_solution(&[1u8; 32], &bm_params);
        let bm_puzzle = puzzle_gen(&bm_params, &bm_solution, &mut rng).unwrap();
        assert_eq!(puzzle_gen(&ur_params, &bm_solution, &mut rng), Err(PuzzleError::SchemeMismatch));
        assert_eq!(
            puzzle_match(&ur_params, &ur_trap, &bm_solution, &bm_puzzle),
            Err(PuzzleError::SchemeMismatch)
        );
        assert_eq!(
            Puzzle::from_bytes(&bm_puzzle.to_bytes(), &ur_params).unwrap_err(),
            PuzzleError::WrongLength { expected: ur_params.puzzle_len(), actual: bm_params.puzzle_len() }
        );
    }

    #[test]
    fn truncated_and_off_group_bytes_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (params, _) = puzzle_setup(Scheme::UniversalReenc, SecurityLevel::Bits128, &mut rng).unwrap();
        let z = puzzle_gen(&params, &encode_solution(&[1u8; 32], &params), &mut rng).unwrap();
        let bytes = z.to_bytes();
        assert!(matches!(
            Puzzle::from_bytes(&bytes[..bytes.len() - 1], &params),
            Err(PuzzleError::WrongLength { .. })
        ));
        let mut bad = bytes.clone();
        bad[2..34].copy_from_slice(&[0xff; 32]);
        assert_eq!(Puzzle::from_bytes(&bad, &params), Err(PuzzleError::InvalidElement));
    }
}

//! Universal re-encryption puzzle.
//!
//! A puzzle for solution element `m` is a pair of ElGamal ciphertexts under
//! the public element `y = g^x`: an encryption of `m` and an encryption of
//! the identity. The second ciphertext lets anyone re-encrypt the first
//! without knowing `y`'s discrete log; only holders of `x` can test a
//! candidate solution.

use rand::{CryptoRng, RngCore};

use super::group::{FieldScalar, HashToGroup, PrimeOrderGroup};

#[derive(Debug, Clone, PartialEq)]
pub struct UrParams<G: PrimeOrderGroup> {
    pub y: G,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrTrapdoor<G: PrimeOrderGroup> {
    pub x: G::Scalar,
}

/// `[(alpha0, beta0); (alpha1, beta1)]`
#[derive(Debug, Clone, PartialEq)]
pub struct UrPuzzle<G: PrimeOrderGroup> {
    pub alpha0: G,
    pub beta0: G,
    pub alpha1: G,
    pub beta1: G,
}

impl<G: PrimeOrderGroup> UrPuzzle<G> {
    pub const ELEMENTS: usize = 4;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * G::ENCODED_LEN);
        for e in [&self.alpha0, &self.beta0, &self.alpha1, &self.beta1] {
            out.extend_from_slice(&e.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 4 * G::ENCODED_LEN {
            return None;
        }
        let mut parts = bytes.chunks_exact(G::ENCODED_LEN).map(G::from_bytes);
        Some(Self {
            alpha0: parts.next()??,
            beta0: parts.next()??,
            alpha1: parts.next()??,
            beta1: parts.next()??,
        })
    }
}

pub fn setup<G: PrimeOrderGroup, R: RngCore + CryptoRng>(rng: &mut R) -> (UrParams<G>, UrTrapdoor<G>) {
    // x = 0 would publish y = 1 and make every puzzle a plaintext.
    let x = G::Scalar::random_nonzero(rng);
    (UrParams { y: G::generator().pow(&x) }, UrTrapdoor { x })
}

pub fn encode_solution<G: HashToGroup>(digest: &[u8; 32]) -> G {
    G::hash_to_group(digest)
}

pub fn gen<G: PrimeOrderGroup, R: RngCore + CryptoRng>(params: &UrParams<G>, m: &G, rng: &mut R) -> UrPuzzle<G> {
    let r0 = G::Scalar::random(rng);
    let r1 = G::Scalar::random_nonzero(rng);
    gen_with_coins(params, m, &r0, &r1)
}

/// Puzzle generation with caller-chosen coins `(r0, r1)`.
pub fn gen_with_coins<G: PrimeOrderGroup>(params: &UrParams<G>, m: &G, r0: &G::Scalar, r1: &G::Scalar) -> UrPuzzle<G> {
    let g = G::generator();
    UrPuzzle {
        alpha0: m.combine(&params.y.pow(r0)),
        beta0: g.pow(r0),
        alpha1: params.y.pow(r1),
        beta1: g.pow(r1),
    }
}

pub fn matches<G: PrimeOrderGroup>(trapdoor: &UrTrapdoor<G>, m: &G, puzzle: &UrPuzzle<G>) -> bool {
    let m1 = puzzle.alpha1.divide(&puzzle.beta1.pow(&trapdoor.x));
    if !m1.is_identity() {
        return false;
    }
    let m0 = puzzle.alpha0.divide(&puzzle.beta0.pow(&trapdoor.x));
    &m0 == m
}

pub fn rerandomize<G: PrimeOrderGroup, R: RngCore + CryptoRng>(puzzle: &UrPuzzle<G>, rng: &mut R) -> UrPuzzle<G> {
    let r0 = G::Scalar::random(rng);
    let r1 = G::Scalar::random_nonzero(rng);
    rerandomize_with_coins(puzzle, &r0, &r1)
}

/// Rerandomization with caller-chosen coins `(r'0, r'1)`.
pub fn rerandomize_with_coins<G: PrimeOrderGroup>(puzzle: &UrPuzzle<G>, r0: &G::Scalar, r1: &G::Scalar) -> UrPuzzle<G> {
    UrPuzzle {
        alpha0: puzzle.alpha0.combine(&puzzle.alpha1.pow(r0)),
        beta0: puzzle.beta0.combine(&puzzle.beta1.pow(r0)),
        alpha1: puzzle.alpha1.pow(r1),
        beta1: puzzle.beta1.pow(r1),
    }
}

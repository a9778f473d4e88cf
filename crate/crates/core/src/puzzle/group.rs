//! Minimal prime-order group and pairing abstractions shared by both puzzle
//! constructions.
//!
//! The puzzle literature writes groups multiplicatively, so the trait speaks
//! in terms of `combine` (the group law), `inverse` and `pow` (repeated
//! application of the law by a scalar). Elliptic-curve backends map these to
//! point addition, negation and scalar multiplication.

use std::fmt::Debug;

use rand::{CryptoRng, RngCore};

/// Scalar field `Z_q` of a prime-order group.
pub trait FieldScalar: Clone + PartialEq + Debug + Send + Sync + 'static {
    /// Length in bytes of the canonical scalar encoding.
    const ENCODED_LEN: usize;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn mul(&self, other: &Self) -> Self;
    fn add(&self, other: &Self) -> Self;
    /// Field inverse; `None` for zero.
    fn invert(&self) -> Option<Self>;
    /// Uniform element of `Z_q`.
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self;

    /// Uniform element of `Z_q^*`.
    fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    fn from_u64(v: u64) -> Self;

    /// Interprets `bytes` as a big-endian integer and reduces it mod `q`.
    fn from_be_bytes_reduced(bytes: &[u8]) -> Self {
        let radix = Self::from_u64(256);
        bytes.iter().fold(Self::zero(), |acc, b| {
            acc.mul(&radix).add(&Self::from_u64(u64::from(*b)))
        })
    }

    fn to_bytes(&self) -> Vec<u8>;
    /// Canonical decoding; rejects non-reduced encodings.
    fn from_bytes(bytes: &[u8]) -> Option<Self>;
}

/// A cyclic group of prime order `q` with a fixed generator.
pub trait PrimeOrderGroup: Clone + PartialEq + Debug + Send + Sync + 'static {
    type Scalar: FieldScalar;

    /// Length in bytes of the canonical (compressed) element encoding.
    const ENCODED_LEN: usize;

    fn generator() -> Self;
    fn identity() -> Self;
    fn is_identity(&self) -> bool;
    fn combine(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn pow(&self, exponent: &Self::Scalar) -> Self;

    fn to_bytes(&self) -> Vec<u8>;
    /// Decodes a canonical encoding, enforcing membership in the prime-order
    /// subgroup. Returns `None` for anything else.
    fn from_bytes(bytes: &[u8]) -> Option<Self>;

    /// `self / other`
    fn divide(&self, other: &Self) -> Self {
        self.combine(&other.inverse())
    }
}

/// Deterministic map from a 32-byte digest into the group.
pub trait HashToGroup: PrimeOrderGroup {
    fn hash_to_group(digest: &[u8; 32]) -> Self;
}

/// Groups `G1`, `G2` sharing a scalar field, with a bilinear map into `GT`.
pub trait PairingEngine: Send + Sync + 'static {
    type Scalar: FieldScalar;
    type G1: PrimeOrderGroup<Scalar = Self::Scalar>;
    type G2: PrimeOrderGroup<Scalar = Self::Scalar>;

    /// Whether `e(a1, b1) == e(a2, b2)`.
    fn pairing_eq(a1: &Self::G1, b1: &Self::G2, a2: &Self::G1, b2: &Self::G2) -> bool;
}

//! Production group backends: Ristretto255 and NIST P-384 for the
//! re-encryption construction, BLS12-381 for the pairing construction.

use bls12_381::{multi_miller_loop, G1Projective, G2Prepared, G2Projective, Gt};
use curve25519_dalek::ristretto::RistrettoPoint;
use ff::{Field, PrimeField};
use group::{Curve, Group, GroupEncoding};
use p384::elliptic_curve::hash2curve::{ExpandMsgXmd, GroupDigest};
use p384::NistP384;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha384, Sha512};

use super::group::{FieldScalar, HashToGroup, PairingEngine, PrimeOrderGroup};

const HASH_TO_GROUP_DST: &[u8] = b"SA2FE-V01-PUZZLE-SOLUTION";

macro_rules! ff_scalar {
    ($ty:ty, $len:expr) => {
        impl FieldScalar for $ty {
            const ENCODED_LEN: usize = $len;

            fn zero() -> Self {
                <$ty as Field>::ZERO
            }
            fn one() -> Self {
                <$ty as Field>::ONE
            }
            fn is_zero(&self) -> bool {
                bool::from(Field::is_zero(self))
            }
            fn mul(&self, other: &Self) -> Self {
                *self * other
            }
            fn add(&self, other: &Self) -> Self {
                *self + other
            }
            fn invert(&self) -> Option<Self> {
                Option::from(Field::invert(self))
            }
            fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
                <$ty as Field>::random(rng)
            }
            fn from_u64(v: u64) -> Self {
                <$ty>::from(v)
            }
            fn to_bytes(&self) -> Vec<u8> {
                AsRef::<[u8]>::as_ref(&self.to_repr()).to_vec()
            }
            fn from_bytes(bytes: &[u8]) -> Option<Self> {
                let mut repr = <$ty as PrimeField>::Repr::default();
                if bytes.len() != AsRef::<[u8]>::as_ref(&repr).len() {
                    return None;
                }
                AsMut::<[u8]>::as_mut(&mut repr).copy_from_slice(bytes);
                Option::from(<$ty as PrimeField>::from_repr(repr))
            }
        }
    };
}

ff_scalar!(curve25519_dalek::Scalar, 32);
ff_scalar!(p384::Scalar, 48);
ff_scalar!(bls12_381::Scalar, 32);

macro_rules! curve_group {
    ($ty:ty, $scalar:ty, $len:expr) => {
        impl PrimeOrderGroup for $ty {
            type Scalar = $scalar;
            const ENCODED_LEN: usize = $len;

            fn generator() -> Self {
                <$ty as Group>::generator()
            }
            fn identity() -> Self {
                <$ty as Group>::identity()
            }
            fn is_identity(&self) -> bool {
                bool::from(Group::is_identity(self))
            }
            fn combine(&self, other: &Self) -> Self {
                *self + other
            }
            fn inverse(&self) -> Self {
                -*self
            }
            fn pow(&self, exponent: &Self::Scalar) -> Self {
                *self * exponent
            }
            fn to_bytes(&self) -> Vec<u8> {
                AsRef::<[u8]>::as_ref(&GroupEncoding::to_bytes(self)).to_vec()
            }
            fn from_bytes(bytes: &[u8]) -> Option<Self> {
                let mut repr = <$ty as GroupEncoding>::Repr::default();
                if bytes.len() != AsRef::<[u8]>::as_ref(&repr).len() {
                    return None;
                }
                AsMut::<[u8]>::as_mut(&mut repr).copy_from_slice(bytes);
                Option::from(<$ty as GroupEncoding>::from_bytes(&repr))
            }
        }
    };
}

curve_group!(RistrettoPoint, curve25519_dalek::Scalar, 32);
curve_group!(p384::ProjectivePoint, p384::Scalar, 49);
curve_group!(G1Projective, bls12_381::Scalar, 48);
curve_group!(G2Projective, bls12_381::Scalar, 96);

impl HashToGroup for RistrettoPoint {
    fn hash_to_group(digest: &[u8; 32]) -> Self {
        let wide = Sha512::new()
            .chain_update(HASH_TO_GROUP_DST)
            .chain_update(digest)
            .finalize();
        let mut uniform = [0u8; 64];
        uniform.copy_from_slice(&wide);
        RistrettoPoint::from_uniform_bytes(&uniform)
    }
}

impl HashToGroup for p384::ProjectivePoint {
    fn hash_to_group(digest: &[u8; 32]) -> Self {
        // hash_from_bytes only fails for DSTs or output lengths outside the
        // expand_message_xmd limits; both are fixed here.
        NistP384::hash_from_bytes::<ExpandMsgXmd<Sha384>>(&[digest], &[HASH_TO_GROUP_DST])
            .expect("fixed DST within expand_message_xmd limits")
    }
}

/// Type-3 pairing on BLS12-381.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bls12;

impl PairingEngine for Bls12 {
    type Scalar = bls12_381::Scalar;
    type G1 = G1Projective;
    type G2 = G2Projective;

    fn pairing_eq(a1: &G1Projective, b1: &G2Projective, a2: &G1Projective, b2: &G2Projective) -> bool {
        let lhs = a1.to_affine();
        let rhs = (-a2).to_affine();
        let b1 = G2Prepared::from(b1.to_affine());
        let b2 = G2Prepared::from(b2.to_affine());
        multi_miller_loop(&[(&lhs, &b1), (&rhs, &b2)]).final_exponentiation() == Gt::identity()
    }
}
